mod common;

use std::collections::BTreeMap;

use ctxtyper::context::{assemble, ContextWindow};
use ctxtyper::corpus::{self, RawAnnotation, TypeVocab};
use ctxtyper::eval;
use ctxtyper::lexer;
use ctxtyper::nn::{self, ModelDims, ModelParams};
use ctxtyper::subword::{self, BpeVocab, SEP};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fast() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

/// Python-like lines built from well-formed pieces, with indentation.
fn source() -> impl Strategy<Value = String> {
    let atom = prop_oneof![
        "[a-z_][a-z0-9_]{0,6}",
        "[0-9]{1,4}",
        "[0-9]\\.[0-9]{1,2}",
        Just("'s t'".to_string()),
        Just("\"q\"".to_string()),
        Just("==".to_string()),
        Just("=".to_string()),
        Just("+".to_string()),
        Just("(".to_string()),
        Just(")".to_string()),
        Just(",".to_string()),
        Just(":".to_string()),
        Just("if".to_string()),
        Just("return".to_string()),
    ];
    let line = (0usize..3, prop::collection::vec(atom, 0..6), prop::option::of("# [a-z ]{0,8}"))
        .prop_map(|(indent, atoms, comment)| {
            let mut s = "    ".repeat(indent);
            s.push_str(&atoms.join(" "));
            if let Some(c) = comment {
                s.push_str("  ");
                s.push_str(&c);
            }
            s
        });
    prop::collection::vec(line, 0..8).prop_map(|lines| lines.join("\n") + "\n")
}

fn strip_ws(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

proptest! {
    #![proptest_config(fast())]

    #[test]
    fn lexer_is_deterministic_and_preserves_text(src in source()) {
        let a = lexer::tokenize(&src).unwrap();
        prop_assert_eq!(&a, &lexer::tokenize(&src).unwrap());
        let joined: String = a.iter().filter(|t| !t.is_synthetic()).map(|t| t.text.as_str()).collect();
        prop_assert_eq!(strip_ws(&joined), strip_ws(&src));
        let lines: Vec<&str> = src.lines().collect();
        let mut prev = (0, 0);
        for t in a.iter().filter(|t| !t.is_synthetic()) {
            prop_assert!((t.line, t.col_start) >= prev);
            prev = (t.line, t.col_end);
            prop_assert_eq!(&lines[t.line - 1][t.col_start..t.col_end], t.text.as_str());
        }
    }

    #[test]
    fn indents_balance(src in source()) {
        let toks = lexer::tokenize(&src).unwrap();
        let indents = toks.iter().filter(|t| t.kind == lexer::TokenKind::Indent).count();
        let dedents = toks.iter().filter(|t| t.kind == lexer::TokenKind::Dedent).count();
        prop_assert_eq!(indents, dedents);
    }

    #[test]
    fn bpe_round_trips_any_string(text in any::<String>()) {
        let vocab = trained_vocab();
        let ids = vocab.encode(&text);
        prop_assert!(ids.iter().all(|&i| (i as usize) < vocab.size() && i != SEP));
        prop_assert_eq!(vocab.decode(&ids).unwrap(), text);
    }

    #[test]
    fn more_merges_never_lengthen(text in "[a-z_ =()]{0,60}", n in 0usize..80) {
        let vocab = trained_vocab();
        let fewer = vocab.truncated(n).encode(&text).len();
        let more = vocab.truncated(n + 5).encode(&text).len();
        prop_assert!(more <= fewer);
        prop_assert!(fewer <= text.len());
    }

    #[test]
    fn bpe_matches_reference(seed in any::<u64>(), extra in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = common::random_corpus(&mut rng, 400);
        let vocab = subword::train_bpe(&docs, 258 + extra).unwrap();
        let got: Vec<(Vec<u8>, Vec<u8>)> = vocab
            .merges()
            .iter()
            .map(|&(l, r)| (vocab.symbol_bytes(l).unwrap().to_vec(), vocab.symbol_bytes(r).unwrap().to_vec()))
            .collect();
        prop_assert_eq!(got, common::reference_bpe(&docs, 258 + extra));
    }

    #[test]
    fn vocab_text_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = common::random_corpus(&mut rng, 300);
        let vocab = subword::train_bpe(&docs, 290).unwrap();
        prop_assert_eq!(BpeVocab::from_text(&vocab.to_text()).unwrap(), vocab);
    }

    #[test]
    fn clean_and_dedup_are_idempotent(labels in prop::collection::vec("[a-z?\\[\\]]{0,4}|None", 0..30)) {
        let anns: Vec<RawAnnotation> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| RawAnnotation {
                file: "f.py".into(),
                var_name: format!("v{}", i % 3),
                line: i + 1,
                col_start: 0,
                col_end: 2,
                type_label: l.clone(),
            })
            .collect();
        let once = corpus::clean(anns);
        prop_assert!(once.iter().all(|a| corpus::is_meaningful_label(&a.type_label)));
        prop_assert_eq!(corpus::clean(once.clone()), once);

        let samples: Vec<_> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| common::sample("f.py", i, &format!("v{}", i % 3), l, vec![], vec!["x".into()], vec![]))
            .collect();
        let d = corpus::deduplicate(samples);
        prop_assert_eq!(corpus::deduplicate(d.clone()), d);
    }

    #[test]
    fn split_is_a_partition(n in 5usize..200, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n).collect();
        let s = corpus::split(items, seed).unwrap();
        prop_assert_eq!((s.valid.len(), s.test.len()), (n / 5, n / 5));
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-700.0f64..700.0, 1..20)) {
        let (p, argmax) = nn::softmax_probs(&logits);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| v <= p[argmax]));
    }

    #[test]
    fn gru_states_stay_in_unit_box(seed in any::<u64>(), ids in prop::collection::vec(0u32..30, 1..40)) {
        let dims = ModelDims { vocab_size: 30, embed_dim: 5, hidden_dim: 7, classes: 3 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::init(dims, &mut rng);
        for b in params.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= 20.0);
        }
        let out = nn::gru_forward(&ids, &params, None).unwrap();
        prop_assert!(out.states.iter().flatten().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn metric_identities(golds in prop::collection::vec(0usize..5, 1..100), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let labels: Vec<String> = (0..5).map(|i| format!("t{i}")).collect();
        let vocab = TypeVocab::from_labels(labels.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranked: Vec<Vec<String>> = golds
            .iter()
            .map(|_| {
                let mut r = labels.clone();
                r.shuffle(&mut rng);
                r
            })
            .collect();
        let g: Vec<&String> = golds.iter().map(|&i| &labels[i]).collect();
        let top1: Vec<&String> = ranked.iter().map(|r| &r[0]).collect();
        let rep = eval::weighted_prf(&top1, &g, &vocab).unwrap();
        prop_assert!((rep.weighted_recall - rep.accuracy).abs() < 1e-12);
        prop_assert_eq!(rep.per_class.iter().map(|c| c.support).sum::<usize>(), golds.len());
        for v in [rep.accuracy, rep.weighted_precision, rep.weighted_recall, rep.weighted_f1] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
        let mut prev = 0.0;
        for k in 1..=5 {
            let r = eval::topk_recall(&ranked, &g, k).unwrap();
            prop_assert!(r >= prev);
            prev = r;
        }
        prop_assert_eq!(prev, 1.0);
        prop_assert_eq!(eval::topk_recall(&ranked, &g, 1).unwrap(), rep.accuracy);
    }

    #[test]
    fn thresholded_retention_shrinks(probs in prop::collection::vec(0.0f64..=1.0, 1..60)) {
        let scored: Vec<eval::Scored> = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| eval::Scored { top1: "a".into(), prob: p, gold: if i % 2 == 0 { "a".into() } else { "b".into() } })
            .collect();
        let rows = eval::threshold_sweep(&scored, &eval::default_thresholds()).unwrap();
        prop_assert_eq!(rows[0].retained, probs.len());
        prop_assert!(rows.windows(2).all(|w| w[1].retained <= w[0].retained && w[1].recall <= w[0].recall));
    }

    #[test]
    fn assembly_respects_the_cap(
        before in prop::collection::vec("[a-z]{1,5}", 0..20),
        line in prop::collection::vec("[a-z=]{1,4}", 1..4),
        after in prop::collection::vec("[a-z]{1,5}", 0..20),
        cap in 16usize..120,
    ) {
        let vocab = trained_vocab();
        let w = ContextWindow { before, line, after, name: "nm".into(), margin: 20 };
        if let Ok(m) = assemble(&w, &vocab, cap) {
            prop_assert!(m.len() <= cap);
            prop_assert_eq!(m.ids.iter().filter(|&&i| i == SEP).count(), 3);
            prop_assert_eq!(vocab.decode(&m.ids[m.name_span.clone()]).unwrap(), "nm");
        }
    }
}

fn trained_vocab() -> BpeVocab {
    use std::sync::OnceLock;
    static V: OnceLock<BpeVocab> = OnceLock::new();
    V.get_or_init(|| {
        let samples = common::name_randomized_corpus(120, 1);
        let texts: Vec<String> = samples
            .iter()
            .map(|s| [s.before_ctx.join(" "), s.line_ctx.join(" "), s.after_ctx.join(" ")].join(" "))
            .collect();
        subword::train_bpe(&texts, 400).unwrap()
    })
    .clone()
}

#[test]
fn corpus_stats_count_every_sample() {
    let samples = common::name_randomized_corpus(40, 2);
    let mut doubled = samples.clone();
    doubled.extend(samples.iter().cloned());
    let stats = corpus::corpus_stats(&doubled);
    assert_eq!(stats.total, 80);
    assert_eq!(stats.unique, 40);
    assert!((stats.dedup_ratio - 0.5).abs() < 1e-12);
    let by_label: BTreeMap<_, _> = stats.per_label.iter().map(|c| (c.label.as_str(), (c.count, c.deduplicated))).collect();
    assert_eq!(by_label["int"], (20, 10));
}
