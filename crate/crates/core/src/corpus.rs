//! Labeled corpus construction.
//!
//! A conservative syntactic labeler stands in for a whole-program type
//! analyzer: it only labels simple assignment targets whose type follows
//! directly from the right-hand side (or from an explicit annotation) and
//! ignores everything else. Labels then go through cleaning, windowing,
//! deduplication and a seeded 60/20/20 split.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context;
use crate::lexer::{self, LexError, Token, TokenKind};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("need at least 5 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("type vocabulary needs at least 2 classes, asked for {0}")]
    TooFewClasses(usize),
    #[error("{path}:{line}: malformed corpus record: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Builtin constructors whose call result type is the constructor name.
pub const BUILTIN_CONSTRUCTORS: &[&str] = &[
    "list", "dict", "set", "tuple", "str", "int", "float", "bool", "object", "complex", "type",
];

/// The eleven basic Python types, most frequent first.
pub const BASIC11: [&str; 11] = [
    "str", "int", "dict", "bool", "float", "list", "tuple", "object", "complex", "set", "type",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAnnotation {
    pub file: PathBuf,
    pub var_name: String,
    pub line: usize,
    pub col_start: usize,
    pub col_end: usize,
    pub type_label: String,
}

/// One labeled variable occurrence with its context window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub file: PathBuf,
    pub var_name: String,
    pub line: usize,
    pub col_start: usize,
    pub col_end: usize,
    pub type_label: String,
    pub before_ctx: Vec<String>,
    pub line_ctx: Vec<String>,
    pub after_ctx: Vec<String>,
}

impl LabeledSample {
    /// Narrow the window to a smaller margin. The result equals what window
    /// extraction at `margin` would have produced, provided the sample was
    /// built with a margin of at least `margin`.
    pub fn with_margin(&self, margin: usize) -> LabeledSample {
        let mut s = self.clone();
        if s.before_ctx.len() > margin {
            s.before_ctx.drain(..s.before_ctx.len() - margin);
        }
        s.after_ctx.truncate(margin);
        s
    }

    pub fn window(&self) -> context::ContextWindow {
        context::ContextWindow {
            before: self.before_ctx.clone(),
            line: self.line_ctx.clone(),
            after: self.after_ctx.clone(),
            name: self.var_name.clone(),
            margin: self.before_ctx.len().max(self.after_ctx.len()),
        }
    }

    fn dedup_key(&self) -> (&[String], &[String], &[String], &str, &str) {
        (
            &self.before_ctx,
            &self.line_ctx,
            &self.after_ctx,
            &self.var_name,
            &self.type_label,
        )
    }
}

/// An assignment statement whose target is a single bare name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentTarget {
    /// Index of the target name token.
    pub name: usize,
    /// Token range of a `x: T = ...` annotation, if present.
    pub annotation: Option<Range<usize>>,
    /// Token range of the right-hand side, up to the end of the statement.
    pub value: Range<usize>,
}

/// Find every `name = ...` and `name: T = ...` statement.
pub fn discover_targets(tokens: &[Token]) -> Vec<AssignmentTarget> {
    let mut out = Vec::new();
    for i in 0..tokens.len() {
        if tokens[i].kind != TokenKind::Name || !is_statement_start(tokens, i) {
            continue;
        }
        let end = statement_end(tokens, i);
        let Some(next) = tokens.get(i + 1) else { continue };
        if next.is(TokenKind::Operator, "=") {
            out.push(AssignmentTarget {
                name: i,
                annotation: None,
                value: i + 2..end,
            });
        } else if next.is(TokenKind::Punctuation, ":") {
            let eq = (i + 2..end).find(|&j| {
                tokens[j].is(TokenKind::Operator, "=") && depth_at(tokens, i + 2, j) == 0
            });
            if let Some(eq) = eq {
                if eq > i + 2 {
                    out.push(AssignmentTarget {
                        name: i,
                        annotation: Some(i + 2..eq),
                        value: eq + 1..end,
                    });
                }
            }
        }
    }
    out
}

fn is_statement_start(tokens: &[Token], i: usize) -> bool {
    match i.checked_sub(1).map(|p| &tokens[p]) {
        None => true,
        Some(prev) => prev.is_synthetic() || prev.is(TokenKind::Punctuation, ";"),
    }
}

/// Index one past the last token of the statement starting at `start`.
fn statement_end(tokens: &[Token], start: usize) -> usize {
    let mut depth = 0usize;
    for (j, t) in tokens.iter().enumerate().skip(start) {
        match (t.kind, t.text.as_str()) {
            (TokenKind::Newline, _) => return j,
            (TokenKind::Punctuation, "(" | "[" | "{") => depth += 1,
            (TokenKind::Punctuation, ")" | "]" | "}") => depth = depth.saturating_sub(1),
            (TokenKind::Punctuation, ";") if depth == 0 => return j,
            _ => {}
        }
    }
    tokens.len()
}

/// Bracket nesting depth just before `at`, counting from `from`.
fn depth_at(tokens: &[Token], from: usize, at: usize) -> isize {
    tokens[from..at].iter().fold(0, |d, t| match (t.kind, t.text.as_str()) {
        (TokenKind::Punctuation, "(" | "[" | "{") => d + 1,
        (TokenKind::Punctuation, ")" | "]" | "}") => d - 1,
        _ => d,
    })
}

/// Reassemble the source text of a token run using the original spacing.
fn verbatim(tokens: &[&Token]) -> String {
    let mut out = String::new();
    for (k, t) in tokens.iter().enumerate() {
        if k > 0 {
            let prev = tokens[k - 1];
            if prev.line == t.line {
                let gap = t.col_start.saturating_sub(prev.col_end);
                out.extend(std::iter::repeat_n(' ', gap));
            } else {
                out.push(' ');
            }
        }
        out.push_str(&t.text);
    }
    out
}

/// Index of the bracket closing the one at `open` within `toks`.
fn matching_close(toks: &[&Token], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (j, t) in toks.iter().enumerate().skip(open) {
        if t.kind != TokenKind::Punctuation {
            continue;
        }
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}

/// True if some token strictly inside `toks[1..last]` at bracket depth 1
/// satisfies `pred`.
fn any_at_top(toks: &[&Token], pred: impl Fn(&Token) -> bool) -> bool {
    let mut depth = 0isize;
    for t in toks {
        if t.kind == TokenKind::Punctuation {
            match t.text.as_str() {
                "(" | "[" | "{" => {
                    depth += 1;
                    continue;
                }
                ")" | "]" | "}" => {
                    depth -= 1;
                    continue;
                }
                _ => {}
            }
        }
        if depth == 1 && pred(t) {
            return true;
        }
    }
    false
}

fn number_type(text: &str) -> &'static str {
    let lower = text.to_ascii_lowercase();
    if lower.ends_with('j') {
        "complex"
    } else if lower.starts_with("0x") || lower.starts_with("0o") || lower.starts_with("0b") {
        "int"
    } else if lower.contains(['.', 'e']) {
        "float"
    } else {
        "int"
    }
}

fn string_type(text: &str) -> &'static str {
    let prefix: String = text.chars().take_while(|c| *c != '"' && *c != '\'').collect();
    if prefix.contains(['b', 'B']) {
        "bytes"
    } else {
        "str"
    }
}

/// Type of a right-hand side, if the rule table determines it.
fn classify_value(value: &[&Token]) -> Option<String> {
    let first = value.first()?;
    let top_level = |pred: &dyn Fn(&Token) -> bool| {
        let mut depth = 0isize;
        value.iter().any(|t| {
            match (t.kind, t.text.as_str()) {
                (TokenKind::Punctuation, "(" | "[" | "{") => depth += 1,
                (TokenKind::Punctuation, ")" | "]" | "}") => depth -= 1,
                _ => return depth == 0 && pred(t),
            }
            false
        })
    };
    if top_level(&|t| t.is(TokenKind::Operator, "=")) {
        return None;
    }
    if top_level(&|t| t.is(TokenKind::Punctuation, ",")) {
        return Some("tuple".into());
    }

    // Literals.
    match value {
        [t] if t.kind == TokenKind::Number => return Some(number_type(&t.text).into()),
        [sign, t]
            if t.kind == TokenKind::Number
                && sign.kind == TokenKind::Operator
                && matches!(sign.text.as_str(), "-" | "+" | "~") =>
        {
            return Some(number_type(&t.text).into())
        }
        [t] if t.kind == TokenKind::Keyword => {
            return match t.text.as_str() {
                "True" | "False" => Some("bool".into()),
                "None" => Some("None".into()),
                _ => None,
            }
        }
        _ => {}
    }
    if value.iter().all(|t| t.kind == TokenKind::String) {
        let kinds: HashSet<_> = value.iter().map(|t| string_type(&t.text)).collect();
        return (kinds.len() == 1).then(|| kinds.into_iter().next().unwrap().to_string());
    }

    // Displays and comprehensions.
    if first.kind == TokenKind::Punctuation && matches!(first.text.as_str(), "[" | "{" | "(") {
        if matching_close(value, 0)? != value.len() - 1 {
            return None;
        }
        let empty = value.len() == 2;
        let comprehension = any_at_top(value, |t| t.is(TokenKind::Keyword, "for"));
        let label = match first.text.as_str() {
            "[" => "list",
            "{" if empty => "dict",
            "{" => {
                let colon = any_at_top(value, |t| {
                    t.is(TokenKind::Punctuation, ":") || t.is(TokenKind::Operator, "**")
                });
                if colon {
                    "dict"
                } else {
                    "set"
                }
            }
            _ if empty => "tuple",
            _ if comprehension => return None,
            _ if any_at_top(value, |t| t.is(TokenKind::Punctuation, ",")) => "tuple",
            _ => return None,
        };
        return Some(label.into());
    }

    // Calls: `Name(...)`, `mod.Name(...)`, `list(...)`.
    if first.kind == TokenKind::Name {
        let mut j = 0;
        while j + 2 < value.len()
            && value[j + 1].is(TokenKind::Punctuation, ".")
            && value[j + 2].kind == TokenKind::Name
        {
            j += 2;
        }
        let callee = value[j];
        if !value.get(j + 1)?.is(TokenKind::Punctuation, "(") {
            return None;
        }
        if matching_close(value, j + 1)? != value.len() - 1 {
            return None;
        }
        if j == 0 && BUILTIN_CONSTRUCTORS.contains(&callee.text.as_str()) {
            return Some(callee.text.clone());
        }
        if callee.text.chars().next().is_some_and(char::is_uppercase) {
            return Some(callee.text.clone());
        }
    }
    None
}

/// Label the assignment targets of one tokenized file.
pub fn label_file(file: &Path, tokens: &[Token]) -> Vec<RawAnnotation> {
    discover_targets(tokens)
        .into_iter()
        .filter_map(|target| {
            let label = match &target.annotation {
                Some(range) => {
                    let toks: Vec<&Token> =
                        tokens[range.clone()].iter().filter(|t| t.kind != TokenKind::Comment).collect();
                    verbatim(&toks)
                }
                None => {
                    let toks: Vec<&Token> = tokens[target.value.clone()]
                        .iter()
                        .filter(|t| t.kind != TokenKind::Comment)
                        .collect();
                    classify_value(&toks)?
                }
            };
            let name = &tokens[target.name];
            Some(RawAnnotation {
                file: file.to_path_buf(),
                var_name: name.text.clone(),
                line: name.line,
                col_start: name.col_start,
                col_end: name.col_end,
                type_label: label,
            })
        })
        .collect()
}

pub fn is_meaningful_label(label: &str) -> bool {
    label != "?" && label != "None" && label.chars().any(|c| c.is_ascii_alphabetic())
}

/// Drop question-mark, `None` and letterless labels.
pub fn clean(annotations: Vec<RawAnnotation>) -> Vec<RawAnnotation> {
    annotations
        .into_iter()
        .filter(|a| is_meaningful_label(&a.type_label))
        .collect()
}

pub fn build_samples(
    annotations: &[RawAnnotation],
    tokens: &[Token],
    margin: usize,
) -> Vec<LabeledSample> {
    annotations
        .iter()
        .filter_map(|a| match context::extract_window(tokens, a, margin) {
            Ok(w) => Some(LabeledSample {
                file: a.file.clone(),
                var_name: a.var_name.clone(),
                line: a.line,
                col_start: a.col_start,
                col_end: a.col_end,
                type_label: a.type_label.clone(),
                before_ctx: w.before,
                line_ctx: w.line,
                after_ctx: w.after,
            }),
            Err(e) => {
                log::warn!("{}: {e}", a.file.display());
                None
            }
        })
        .collect()
}

/// Lex, label, clean and window one source file.
pub fn samples_from_source(
    file: &Path,
    source: &str,
    margin: usize,
) -> Result<Vec<LabeledSample>, LexError> {
    let tokens = lexer::tokenize(source)?;
    let annotations = clean(label_file(file, &tokens));
    Ok(build_samples(&annotations, &tokens, margin))
}

/// Keep the first occurrence of each (context, name, label) key.
pub fn deduplicate(samples: Vec<LabeledSample>) -> Vec<LabeledSample> {
    let mut seen = HashSet::new();
    let keep: Vec<bool> = samples.iter().map(|s| seen.insert(s.dedup_key())).collect();
    drop(seen);
    samples
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then 60/20/20 by count with the remainder going to train.
pub fn split<T>(mut samples: Vec<T>, seed: u64) -> Result<Split<T>, CorpusError> {
    let n = samples.len();
    if n < 5 {
        return Err(CorpusError::TooFewSamples(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples.shuffle(&mut rng);
    let n_valid = n / 5;
    let n_test = n / 5;
    let n_train = n - n_valid - n_test;
    let test = samples.split_off(n_train + n_valid);
    let valid = samples.split_off(n_train);
    Ok(Split {
        train: samples,
        valid,
        test,
    })
}

/// The classifier's output space: labels ordered by descending frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl TypeVocab {
    pub fn from_labels(labels: Vec<String>) -> Self {
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Self { labels, index }
    }

    pub fn basic11() -> Self {
        Self::from_labels(BASIC11.iter().map(|s| s.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }
}

fn label_counts(samples: &[LabeledSample]) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for s in samples {
        *counts.entry(s.type_label.as_str()).or_insert(0) += 1;
    }
    counts
}

fn by_frequency(counts: HashMap<&str, usize>) -> Vec<(&str, usize)> {
    let mut v: Vec<_> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v
}

/// Top `classes` labels by frequency, ties broken lexicographically. With
/// fewer distinct labels than requested, all of them are returned.
pub fn build_type_vocab(samples: &[LabeledSample], classes: usize) -> Result<TypeVocab, CorpusError> {
    if classes < 2 {
        return Err(CorpusError::TooFewClasses(classes));
    }
    let labels = by_frequency(label_counts(samples))
        .into_iter()
        .take(classes)
        .map(|(l, _)| l.to_string())
        .collect();
    Ok(TypeVocab::from_labels(labels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
    pub deduplicated: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusStats {
    pub per_label: Vec<LabelCount>,
    pub total: usize,
    pub unique: usize,
    /// Fraction of samples removed by deduplication.
    pub dedup_ratio: f64,
}

pub fn corpus_stats(samples: &[LabeledSample]) -> CorpusStats {
    if samples.is_empty() {
        return CorpusStats::default();
    }
    let deduped = deduplicate(samples.to_vec());
    let after = label_counts(&deduped);
    let per_label = by_frequency(label_counts(samples))
        .into_iter()
        .map(|(label, count)| LabelCount {
            label: label.to_string(),
            count,
            deduplicated: after.get(label).copied().unwrap_or(0),
        })
        .collect();
    CorpusStats {
        per_label,
        total: samples.len(),
        unique: deduped.len(),
        dedup_ratio: (samples.len() - deduped.len()) as f64 / samples.len() as f64,
    }
}

impl CorpusStats {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("type\tcount\tdeduplication\n");
        for c in &self.per_label {
            out.push_str(&format!("{}\t{}\t{}\n", c.label, c.count, c.deduplicated));
        }
        out.push_str(&format!("TOTAL\t{}\t{}\n", self.total, self.unique));
        out.push_str(&format!("# dedup_ratio\t{:.6}\n", self.dedup_ratio));
        out
    }
}

pub fn write_jsonl(path: &Path, samples: &[LabeledSample]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for s in samples {
        serde_json::to_writer(&mut w, s).expect("samples always serialize");
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<LabeledSample>, CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| CorpusError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}
