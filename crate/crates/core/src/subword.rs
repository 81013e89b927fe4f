//! Byte-level byte-pair encoding.
//!
//! The base alphabet is all 256 byte values, so any UTF-8 text encodes
//! without an unknown symbol. Two reserved ids follow the bytes: `PAD` and
//! `SEP`. Merged symbols are numbered from 258 in creation order.
//!
//! Text is pre-split into maximal runs of whitespace and non-whitespace
//! characters; merges never cross a run boundary.
//!
//! Symbols are identified by their byte string. When two different merges
//! produce the same string they share one id, so the vocabulary holds
//! `258 + distinct merged strings` symbols.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const PAD: u32 = 256;
pub const SEP: u32 = 257;
pub const BASE_SIZE: usize = 258;

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("target size {0} leaves no room for merges (must exceed {BASE_SIZE})")]
    TargetTooSmall(usize),
    #[error("id {id} is not a text symbol in a vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("decoded bytes are not valid UTF-8")]
    InvalidUtf8,
    #[error("vocabulary file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Anything that maps a lexer token to model input ids.
pub trait TokenEncoder {
    fn encode_token(&self, text: &str) -> Vec<u32>;
    fn sep_id(&self) -> u32;
    fn vocab_size(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeVocab {
    merges: Vec<(u32, u32)>,
    symbols: Vec<Vec<u8>>,
    id_of: HashMap<Vec<u8>, u32>,
    /// Every rank at which a pair was merged, ascending, with its result id.
    ranks: HashMap<(u32, u32), Vec<(usize, u32)>>,
}

impl Default for BpeVocab {
    fn default() -> Self {
        Self::base()
    }
}

/// Split text into maximal whitespace / non-whitespace runs.
pub fn pre_tokenize(text: &str) -> impl Iterator<Item = &str> {
    let mut rest = text;
    std::iter::from_fn(move || {
        let first = rest.chars().next()?;
        let ws = first.is_whitespace();
        let end = rest
            .char_indices()
            .find(|(_, c)| c.is_whitespace() != ws)
            .map_or(rest.len(), |(i, _)| i);
        let (chunk, tail) = rest.split_at(end);
        rest = tail;
        Some(chunk)
    })
}

impl BpeVocab {
    /// A merge-free vocabulary: bytes plus the two reserved ids.
    pub fn base() -> Self {
        let mut symbols: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        symbols.push(Vec::new());
        symbols.push(Vec::new());
        let id_of = (0..=255u8).map(|b| (vec![b], b as u32)).collect();
        Self {
            merges: Vec::new(),
            symbols,
            id_of,
            ranks: HashMap::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn symbol_bytes(&self, id: u32) -> Option<&[u8]> {
        self.symbols.get(id as usize).map(Vec::as_slice)
    }

    pub fn id_of(&self, bytes: &[u8]) -> Option<u32> {
        self.id_of.get(bytes).copied()
    }

    /// Append a merge rule, returning the id of the merged symbol.
    fn push_merge(&mut self, left: u32, right: u32) -> u32 {
        let mut bytes = self.symbols[left as usize].clone();
        bytes.extend_from_slice(&self.symbols[right as usize]);
        let id = match self.id_of.get(&bytes) {
            Some(&id) => id,
            None => {
                let id = self.symbols.len() as u32;
                self.symbols.push(bytes.clone());
                self.id_of.insert(bytes, id);
                id
            }
        };
        self.ranks.entry((left, right)).or_default().push((self.merges.len(), id));
        self.merges.push((left, right));
        id
    }

    /// The vocabulary formed by the first `n` merges only.
    pub fn truncated(&self, n: usize) -> Self {
        let mut v = Self::base();
        for &(l, r) in self.merges.iter().take(n) {
            v.push_merge(l, r);
        }
        v
    }

    /// Applies merges in list order: each step takes the lowest-ranked pair
    /// present whose rank is above the previously applied one.
    fn encode_chunk(&self, chunk: &str, out: &mut Vec<u32>) {
        let mut syms: Vec<u32> = chunk.bytes().map(u32::from).collect();
        let mut applied: Option<usize> = None;
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| {
                    let ranks = self.ranks.get(&(w[0], w[1]))?;
                    let &(rank, id) = ranks.iter().find(|(r, _)| applied.is_none_or(|a| *r > a))?;
                    Some((rank, w[0], w[1], id))
                })
                .min();
            let Some((rank, l, r, id)) = best else { break };
            syms = merge_pair(&syms, l, r, id);
            applied = Some(rank);
        }
        out.extend(syms);
    }

    /// Encode text into subword ids. Total: never fails, never emits PAD/SEP.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for chunk in pre_tokenize(text) {
            self.encode_chunk(chunk, &mut out);
        }
        out
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String, BpeError> {
        let mut bytes = Vec::new();
        for &id in ids {
            if id == PAD || id == SEP || id as usize >= self.size() {
                return Err(BpeError::IdOutOfRange { id, size: self.size() });
            }
            bytes.extend_from_slice(&self.symbols[id as usize]);
        }
        String::from_utf8(bytes).map_err(|_| BpeError::InvalidUtf8)
    }

    /// Serialized form: `bpe-v1 <size>` then one hex-encoded merge per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("bpe-v1 {}\n", self.size());
        for &(l, r) in &self.merges {
            let _ = writeln!(out, "{} {}", hex(&self.symbols[l as usize]), hex(&self.symbols[r as usize]));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, BpeError> {
        let fmt_err = |line: usize, msg: String| BpeError::Format { line, msg };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| fmt_err(1, "missing header".into()))?;
        let size: usize = header
            .strip_prefix("bpe-v1 ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| fmt_err(1, format!("bad header {header:?}")))?;
        let mut vocab = Self::base();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            if line.is_empty() {
                continue;
            }
            let (l, r) = line
                .split_once(' ')
                .ok_or_else(|| fmt_err(n, "expected two hex strings".into()))?;
            let resolve = |h: &str| -> Result<u32, BpeError> {
                let bytes = unhex(h).ok_or_else(|| fmt_err(n, format!("bad hex {h:?}")))?;
                vocab
                    .id_of(&bytes)
                    .ok_or_else(|| fmt_err(n, format!("merge references unknown symbol {h}")))
            };
            let (l, r) = (resolve(l)?, resolve(r)?);
            vocab.push_merge(l, r);
        }
        if vocab.size() != size {
            return Err(fmt_err(1, format!("header says size {size}, merges give {}", vocab.size())));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<(), BpeError> {
        std::fs::write(path, self.to_text()).map_err(|source| BpeError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, BpeError> {
        let text = std::fs::read_to_string(path).map_err(|source| BpeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    /// CRC32 of the serialized merges; ties checkpoints to a vocabulary.
    pub fn fingerprint(&self) -> u32 {
        crc32fast::hash(self.to_text().as_bytes())
    }
}

impl TokenEncoder for BpeVocab {
    fn encode_token(&self, text: &str) -> Vec<u32> {
        self.encode(text)
    }

    fn sep_id(&self) -> u32 {
        SEP
    }

    fn vocab_size(&self) -> usize {
        self.size()
    }
}

fn merge_pair(syms: &[u32], l: u32, r: u32, id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
            out.push(id);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<Vec<u8>> {
    if s.is_empty() || !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

/// Learn merges by repeatedly joining the most frequent adjacent pair.
///
/// Ties on frequency go to the lexicographically smallest
/// `(left bytes, right bytes)`. Training stops once the vocabulary reaches
/// `target_size` or no pair occurs at least twice.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<BpeVocab, BpeError> {
    if corpus.is_empty() {
        return Err(BpeError::EmptyCorpus);
    }
    if target_size <= BASE_SIZE {
        return Err(BpeError::TargetTooSmall(target_size));
    }
    let mut word_freq: HashMap<&str, i64> = HashMap::new();
    for text in corpus {
        for chunk in pre_tokenize(text.as_ref()) {
            *word_freq.entry(chunk).or_insert(0) += 1;
        }
    }
    let mut words: Vec<(Vec<u32>, i64)> = {
        let mut v: Vec<_> = word_freq.into_iter().collect();
        v.sort_unstable();
        v.into_iter()
            .map(|(w, f)| (w.bytes().map(u32::from).collect(), f))
            .collect()
    };

    let mut pair_count: HashMap<(u32, u32), i64> = HashMap::new();
    let mut pair_words: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, (syms, freq)) in words.iter().enumerate() {
        for w in syms.windows(2) {
            let p = (w[0], w[1]);
            *pair_count.entry(p).or_insert(0) += freq;
            pair_words.entry(p).or_default().insert(wi);
        }
    }

    let mut vocab = BpeVocab::base();
    while vocab.size() < target_size {
        let mut best: Option<((u32, u32), i64)> = None;
        for (&p, &c) in &pair_count {
            if c < 2 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bp, bc)) => {
                    c > bc
                        || (c == bc
                            && (vocab.symbols[p.0 as usize].as_slice(), vocab.symbols[p.1 as usize].as_slice())
                                < (vocab.symbols[bp.0 as usize].as_slice(), vocab.symbols[bp.1 as usize].as_slice()))
                }
            };
            if better {
                best = Some((p, c));
            }
        }
        let Some(((l, r), _)) = best else { break };
        let id = vocab.push_merge(l, r);

        let mut affected: Vec<usize> = pair_words.remove(&(l, r)).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        for wi in affected {
            let (syms, freq) = &mut words[wi];
            if !syms.windows(2).any(|w| w[0] == l && w[1] == r) {
                continue;
            }
            for w in syms.windows(2) {
                let p = (w[0], w[1]);
                let c = pair_count.get_mut(&p).expect("pair counted");
                *c -= *freq;
                if *c == 0 {
                    pair_count.remove(&p);
                }
            }
            *syms = merge_pair(syms, l, r, id);
            for w in syms.windows(2) {
                let p = (w[0], w[1]);
                *pair_count.entry(p).or_insert(0) += *freq;
                pair_words.entry(p).or_default().insert(wi);
            }
        }
        pair_count.remove(&(l, r));
    }
    Ok(vocab)
}

/// Whole-token vocabulary with a single unknown id: the non-subword baseline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WholeTokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl WholeTokenVocab {
    pub const PAD: u32 = 0;
    pub const SEP: u32 = 1;
    pub const UNK: u32 = 2;
    const FIRST: u32 = 3;

    /// Keep the `max_tokens` most frequent texts (ties lexicographic).
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_tokens: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in texts {
            *counts.entry(t).or_insert(0) += 1;
        }
        let mut v: Vec<_> = counts.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_tokens(v.into_iter().take(max_tokens).map(|(t, _)| t.to_string()).collect())
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + Self::FIRST))
            .collect();
        Self { tokens, index }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, text: &str) -> u32 {
        self.index.get(text).copied().unwrap_or(Self::UNK)
    }
}

impl TokenEncoder for WholeTokenVocab {
    fn encode_token(&self, text: &str) -> Vec<u32> {
        vec![self.id(text)]
    }

    fn sep_id(&self) -> u32 {
        Self::SEP
    }

    fn vocab_size(&self) -> usize {
        self.tokens.len() + Self::FIRST as usize
    }
}

/// The input encoder a model was trained with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Encoder {
    Bpe(BpeVocab),
    WholeToken(WholeTokenVocab),
}

impl TokenEncoder for Encoder {
    fn encode_token(&self, text: &str) -> Vec<u32> {
        match self {
            Encoder::Bpe(v) => v.encode_token(text),
            Encoder::WholeToken(v) => v.encode_token(text),
        }
    }

    fn sep_id(&self) -> u32 {
        match self {
            Encoder::Bpe(v) => v.sep_id(),
            Encoder::WholeToken(v) => v.sep_id(),
        }
    }

    fn vocab_size(&self) -> usize {
        match self {
            Encoder::Bpe(v) => v.vocab_size(),
            Encoder::WholeToken(v) => v.vocab_size(),
        }
    }
}
