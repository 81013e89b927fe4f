//! Shared helpers for integration tests: synthetic corpus generators and a
//! brute-force BPE reference trainer.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ctxtyper::corpus::LabeledSample;
use ctxtyper::engine::TrainConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn sample(
    file: &str,
    line: usize,
    name: &str,
    label: &str,
    before: Vec<String>,
    line_ctx: Vec<String>,
    after: Vec<String>,
) -> LabeledSample {
    LabeledSample {
        file: file.into(),
        var_name: name.to_string(),
        line,
        col_start: 0,
        col_end: name.len(),
        type_label: label.to_string(),
        before_ctx: before,
        line_ctx,
        after_ctx: after,
    }
}

pub fn ident(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

/// Tokens that carry no label information.
pub const FILLER: &[&str] = &[
    "self", "data", "item", "value", "call", "(", ")", ".", ",", "+", "-", "*", "if", "return", "for",
    "in", "not", "and", "node", "key", "obj", "args", "kwargs", "result", "get", "run", "x", "y",
];

pub fn filler(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| FILLER.choose(rng).unwrap().to_string()).collect()
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Four classes, randomly named targets; the class is visible only in the
/// assigned literal on the target line.
pub fn name_randomized_corpus(n: usize, seed: u64) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let name = ident(&mut rng, 6);
            let d = rng.gen_range(0..100).to_string();
            let (label, value) = match i % 4 {
                0 => ("int", vec![d]),
                1 => ("str", vec![format!("'{}'", ident(&mut rng, 4))]),
                2 => ("list", strs(&["[", &d, "]"])),
                _ => ("dict", strs(&["{", "'k'", ":", &d, "}"])),
            };
            let mut line = vec![name.clone(), "=".to_string()];
            line.extend(value);
            let before = filler(&mut rng, 6);
            let after = filler(&mut rng, 6);
            sample("synthetic.py", i + 1, &name, label, before, line, after)
        })
        .collect()
}

/// The committed overfit corpus: 200 samples, 4 classes.
pub fn overfit_corpus() -> Vec<LabeledSample> {
    name_randomized_corpus(200, 7)
}

pub const OVERFIT_FIXTURE: &str = "overfit_200.jsonl";

/// Two classes decided by a marker token exactly `distance` tokens before
/// the target line, which is the last line of its file.
pub fn distance_corpus(n: usize, distance: usize, seed: u64) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let context = distance + 30;
    (0..n)
        .map(|i| {
            let (label, marker) = if i % 2 == 0 { ("int", "alpha") } else { ("str", "omega") };
            let mut before = filler(&mut rng, context);
            before[context - distance] = marker.to_string();
            let name = ident(&mut rng, 5);
            let line = vec![name.clone(), "=".to_string(), FILLER.choose(&mut rng).unwrap().to_string()];
            sample("distance.py", context + 1, &name, label, before, line, Vec::new())
        })
        .collect()
}

pub const SUFFIXES: [(&str, &str); 4] = [("_count", "int"), ("_name", "str"), ("_items", "list"), ("_enabled", "bool")];

/// Labels follow the name suffix. Half the samples reuse a small pool of
/// prefixes; the other half get a fresh random prefix, so about half of
/// any test split is names never seen whole in training.
pub fn suffix_corpus(n: usize, seed: u64) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<String> = (0..4).map(|_| ident(&mut rng, 5)).collect();
    (0..n)
        .map(|i| {
            let (suffix, label) = SUFFIXES[i % 4];
            let prefix = if (i / 4) % 2 == 0 {
                pool.choose(&mut rng).unwrap().clone()
            } else {
                ident(&mut rng, 6)
            };
            let name = format!("{prefix}{suffix}");
            let line = vec![name.clone(), "=".to_string(), FILLER.choose(&mut rng).unwrap().to_string()];
            let before = filler(&mut rng, 3);
            let after = filler(&mut rng, 3);
            sample("suffix.py", i + 1, &name, label, before, line, after)
        })
        .collect()
}

/// Small, fast model settings for synthetic experiments.
pub fn small_config() -> TrainConfig {
    TrainConfig {
        margin: 128,
        tensor_len: 512,
        classes: 10,
        embed_dim: 16,
        hidden_dim: 24,
        dropout: 0.1,
        lr: 0.01,
        batch_size: 8,
        epochs: 20,
        seed: 11,
        ..TrainConfig::default()
    }
}

type Pair = (Vec<u8>, Vec<u8>);

/// Reference BPE: recount every pair over every word at each step. Returns
/// the merge sequence as byte strings.
pub fn reference_bpe(corpus: &[String], target_size: usize) -> Vec<Pair> {
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for text in corpus {
        for w in split_runs(text) {
            *freq.entry(w).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<Vec<u8>>, usize)> = freq
        .into_iter()
        .map(|(w, f)| (w.bytes().map(|b| vec![b]).collect(), f))
        .collect();
    let mut merges = Vec::new();
    let mut made: BTreeSet<Vec<u8>> = BTreeSet::new();
    while 258 + made.len() < target_size {
        let mut counts: BTreeMap<(Vec<u8>, Vec<u8>), usize> = BTreeMap::new();
        for (syms, f) in &words {
            for w in syms.windows(2) {
                *counts.entry((w[0].clone(), w[1].clone())).or_default() += f;
            }
        }
        // BTreeMap iterates in lexicographic order, so the first maximum wins ties.
        let mut best: Option<(&Pair, usize)> = None;
        for (p, &c) in &counts {
            if c >= 2 && best.is_none_or(|(_, bc)| c > bc) {
                best = Some((p, c));
            }
        }
        let Some((pair, _)) = best else { break };
        let pair = pair.clone();
        for (syms, _) in &mut words {
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == pair.0 && syms[i + 1] == pair.1 {
                    out.push([pair.0.as_slice(), pair.1.as_slice()].concat());
                    i += 2;
                } else {
                    out.push(syms[i].clone());
                    i += 1;
                }
            }
            *syms = out;
        }
        made.insert([pair.0.as_slice(), pair.1.as_slice()].concat());
        merges.push(pair);
    }
    merges
}

/// Maximal whitespace / non-whitespace runs, written independently of the
/// library's splitter.
pub fn split_runs(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut prev: Option<bool> = None;
    for c in text.chars() {
        let ws = c.is_whitespace();
        if prev == Some(ws) {
            out.last_mut().unwrap().push(c);
        } else {
            out.push(c.to_string());
        }
        prev = Some(ws);
    }
    out
}

/// Random text drawn from a small alphabet so pairs repeat.
pub fn random_corpus(rng: &mut ChaCha8Rng, max_bytes: usize) -> Vec<String> {
    const ALPHABET: &[&str] = &["a", "b", "c", "ab", " ", "  ", "_", "é", "x", "\n", "=", "1"];
    let mut docs = Vec::new();
    let mut total = 0;
    let target = rng.gen_range(1..=max_bytes);
    while total < target {
        let len = rng.gen_range(1..40);
        let mut s = String::new();
        for _ in 0..len {
            s.push_str(ALPHABET.choose(rng).unwrap());
        }
        if total + s.len() > max_bytes {
            break;
        }
        total += s.len();
        docs.push(s);
    }
    if docs.is_empty() {
        docs.push("ab ab".to_string());
    }
    docs
}
