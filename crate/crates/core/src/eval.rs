//! Metrics over prediction dumps, threshold/margin sweeps and the context
//! and embedding contrasts.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{LabeledSample, TypeVocab};
use crate::engine::{
    self, AnnotationRecord, EmbeddingMode, Encoded, EngineError, TrainConfig, TrainRun, TypeModel,
};
use crate::subword::BpeVocab;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("{preds} predictions but {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("label {0:?} is not in the type vocabulary")]
    UnknownLabel(String),
    #[error("prediction record without a gold label at line {0}")]
    MissingGold(usize),
    #[error("{path}:{line}: {source}")]
    Record {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn check_lengths(preds: usize, golds: usize) -> Result<(), EvalError> {
    if preds != golds {
        return Err(EvalError::LengthMismatch { preds, golds });
    }
    if golds == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Exact-match fraction.
pub fn accuracy<P: AsRef<str>, G: AsRef<str>>(preds: &[P], golds: &[G]) -> Result<f64, EvalError> {
    check_lengths(preds.len(), golds.len())?;
    let hits = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| p.as_ref() == g.as_ref())
        .count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Fraction of samples whose gold label is among the first `k` ranked.
pub fn topk_recall<R: AsRef<str>, G: AsRef<str>>(
    ranked: &[Vec<R>],
    golds: &[G],
    k: usize,
) -> Result<f64, EvalError> {
    check_lengths(ranked.len(), golds.len())?;
    let hits = ranked
        .iter()
        .zip(golds)
        .filter(|(r, g)| r.iter().take(k).any(|l| l.as_ref() == g.as_ref()))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: String,
    pub support: usize,
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No sample was predicted as this class, so precision was taken as 0.
    pub zero_predicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub n_samples: usize,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// One-vs-rest precision, recall and F1 per class, averaged with gold
/// support as weights. F1 is averaged per class, not recomputed from the
/// averaged precision and recall.
pub fn weighted_prf<P: AsRef<str>, G: AsRef<str>>(
    preds: &[P],
    golds: &[G],
    vocab: &TypeVocab,
) -> Result<EvalReport, EvalError> {
    check_lengths(preds.len(), golds.len())?;
    let c = vocab.len();
    let (mut tp, mut support, mut predicted) = (vec![0usize; c], vec![0usize; c], vec![0usize; c]);
    let id = |l: &str| vocab.id(l).ok_or_else(|| EvalError::UnknownLabel(l.to_string()));
    for (p, g) in preds.iter().zip(golds) {
        let (p, g) = (id(p.as_ref())?, id(g.as_ref())?);
        support[g] += 1;
        predicted[p] += 1;
        tp[g] += usize::from(p == g);
    }
    let n = golds.len();
    let mut per_class = Vec::with_capacity(c);
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for k in 0..c {
        let zero_predicted = predicted[k] == 0;
        let precision = if zero_predicted { 0.0 } else { tp[k] as f64 / predicted[k] as f64 };
        let recall = if support[k] == 0 { 0.0 } else { tp[k] as f64 / support[k] as f64 };
        let f1 = harmonic(precision, recall);
        let w = support[k] as f64;
        wp += w * precision;
        wr += w * recall;
        wf += w * f1;
        per_class.push(ClassMetrics {
            label: vocab.label(k).to_string(),
            support: support[k],
            predicted: predicted[k],
            precision,
            recall,
            f1,
            zero_predicted,
        });
    }
    Ok(EvalReport {
        accuracy: tp.iter().sum::<usize>() as f64 / n as f64,
        weighted_precision: wp / n as f64,
        weighted_recall: wr / n as f64,
        weighted_f1: wf / n as f64,
        per_class,
        n_samples: n,
    })
}

/// Top-1 label, its probability and the gold label for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub top1: String,
    pub prob: f64,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub retained: usize,
    /// Over retained samples.
    pub precision: f64,
    /// Over all samples; unretained ones count as misses.
    pub recall: f64,
    pub f1: f64,
}

/// 0.0, 0.1, ..., 0.9.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

pub fn threshold_sweep(scored: &[Scored], thresholds: &[f64]) -> Result<Vec<ThresholdRow>, EvalError> {
    if scored.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    let n = scored.len() as f64;
    Ok(ts
        .into_iter()
        .map(|threshold| {
            let kept = scored.iter().filter(|s| s.prob >= threshold);
            let (retained, correct) = kept.fold((0, 0), |(r, c), s| (r + 1, c + usize::from(s.top1 == s.gold)));
            let precision = if retained == 0 { 0.0 } else { correct as f64 / retained as f64 };
            let recall = correct as f64 / n;
            ThresholdRow {
                threshold,
                retained,
                precision,
                recall,
                f1: harmonic(precision, recall),
            }
        })
        .collect())
}

/// Full ranking and gold label for one sample.
pub type RankedPrediction = (Vec<(String, f64)>, String);

/// Model predictions on encoded samples, ranked over all classes.
pub fn predict_set(model: &TypeModel, set: &[Encoded]) -> Result<Vec<RankedPrediction>, EvalError> {
    set.iter()
        .map(|e| {
            let p = model.predict(&e.input, model.types.len())?;
            Ok((p.ranked, model.types.label(e.label).to_string()))
        })
        .collect()
}

/// Everything the reports need from one prediction pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub scored: Vec<Scored>,
    pub ranked: Vec<Vec<String>>,
    pub golds: Vec<String>,
}

impl Evaluation {
    pub fn topk(&self, k: usize) -> f64 {
        topk_recall(&self.ranked, &self.golds, k).unwrap_or(0.0)
    }
}

pub fn evaluate(model: &TypeModel, set: &[Encoded]) -> Result<Evaluation, EvalError> {
    let preds = predict_set(model, set)?;
    let mut scored = Vec::with_capacity(preds.len());
    let mut ranked = Vec::with_capacity(preds.len());
    let mut golds = Vec::with_capacity(preds.len());
    for (r, gold) in preds {
        scored.push(Scored {
            top1: r[0].0.clone(),
            prob: r[0].1,
            gold: gold.clone(),
        });
        ranked.push(r.into_iter().map(|(l, _)| l).collect());
        golds.push(gold);
    }
    let top1: Vec<&str> = scored.iter().map(|s| s.top1.as_str()).collect();
    let report = weighted_prf(&top1, &golds, &model.types)?;
    Ok(Evaluation {
        report,
        scored,
        ranked,
        golds,
    })
}

/// Prediction dump lines for the test split, with gold labels attached.
pub fn dump_records(
    model: &TypeModel,
    samples: &[LabeledSample],
    set: &[Encoded],
    k: usize,
) -> Result<Vec<AnnotationRecord>, EvalError> {
    samples
        .iter()
        .zip(set)
        .map(|(s, e)| {
            let mut p = model.predict(&e.input, k)?;
            p.var_name = s.var_name.clone();
            p.file = s.file.clone();
            p.line = s.line;
            let mut rec = AnnotationRecord::from(&p);
            rec.gold = Some(s.type_label.clone());
            Ok(rec)
        })
        .collect()
}

pub fn read_dump(path: &Path) -> Result<Vec<AnnotationRecord>, EvalError> {
    let name = path.display().to_string();
    let io = |source| EvalError::Io { path: name.clone(), source };
    let reader = BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| EvalError::Record {
            path: name.clone(),
            line: i + 1,
            source,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), EvalError> {
    let io = |source| EvalError::Io { path: path.display().to_string(), source };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for r in rows {
        serde_json::to_writer(&mut w, r).expect("records serialize");
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Metrics from a dump with gold labels. The label space is every gold or
/// predicted label, most frequent gold first.
pub fn evaluate_dump(records: &[AnnotationRecord]) -> Result<Evaluation, EvalError> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut golds = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let g = r.gold.as_deref().ok_or(EvalError::MissingGold(i + 1))?;
        *counts.entry(g).or_insert(0) += 1;
        golds.push(g.to_string());
    }
    for r in records {
        counts.entry(&r.type_label).or_insert(0);
    }
    let mut labels: Vec<(&str, usize)> = counts.into_iter().collect();
    labels.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let vocab = TypeVocab::from_labels(labels.into_iter().map(|(l, _)| l.to_string()).collect());
    let top1: Vec<&str> = records.iter().map(|r| r.type_label.as_str()).collect();
    let report = weighted_prf(&top1, &golds, &vocab)?;
    let scored = records
        .iter()
        .zip(&golds)
        .map(|(r, g)| Scored {
            top1: r.type_label.clone(),
            prob: r.prob,
            gold: g.clone(),
        })
        .collect();
    let ranked = records
        .iter()
        .map(|r| r.topk.iter().map(|t| t.type_label.clone()).collect())
        .collect();
    Ok(Evaluation {
        report,
        scored,
        ranked,
        golds,
    })
}

/// Accuracy on all three splits plus the test-set report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
    pub test: EvalReport,
}

pub fn summarize(run: &TrainRun) -> Result<RunSummary, EvalError> {
    let acc = |set: &[Encoded]| engine::accuracy_on(&run.model.params, set).map_err(EngineError::from);
    Ok(RunSummary {
        train_accuracy: acc(&run.train)?,
        valid_accuracy: acc(&run.valid)?,
        test: evaluate(&run.model, &run.test)?.report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginRow {
    pub margin: usize,
    pub report: EvalReport,
}

/// One full train and test pass per margin. Windows are narrowed from the
/// stored ones, so the corpus must have been built with a margin at least
/// as large as the largest requested. Narrowed samples are not
/// re-deduplicated, which keeps the seeded split identical across margins.
pub fn margin_sweep(
    base: &TrainConfig,
    samples: &[LabeledSample],
    bpe: Option<&BpeVocab>,
    margins: &[usize],
) -> Result<Vec<MarginRow>, EvalError> {
    margins
        .iter()
        .map(|&margin| {
            let narrowed = samples.iter().map(|s| s.with_margin(margin)).collect();
            let config = TrainConfig { margin, ..base.clone() };
            let run = engine::run_training(narrowed, bpe, &config)?;
            Ok(MarginRow {
                margin,
                report: evaluate(&run.model, &run.test)?.report,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contrast {
    pub rows: Vec<(String, RunSummary)>,
}

/// Train with context on and off, everything else equal.
pub fn ablation_context(
    config: &TrainConfig,
    samples: &[LabeledSample],
    bpe: Option<&BpeVocab>,
) -> Result<Contrast, EvalError> {
    let mut rows = Vec::new();
    for (name, enabled) in [("context", true), ("no_context", false)] {
        let cfg = TrainConfig { context_enabled: enabled, ..config.clone() };
        rows.push((name.to_string(), summarize(&engine::run_training(samples.to_vec(), bpe, &cfg)?)?));
    }
    Ok(Contrast { rows })
}

/// Train with BPE and with whole-token embeddings, everything else equal.
pub fn embedding_contrast(
    config: &TrainConfig,
    samples: &[LabeledSample],
    bpe: &BpeVocab,
) -> Result<Contrast, EvalError> {
    let mut rows = Vec::new();
    for mode in [EmbeddingMode::Bpe, EmbeddingMode::WholeToken] {
        let cfg = TrainConfig { embedding: mode, ..config.clone() };
        let run = engine::run_training(samples.to_vec(), Some(bpe), &cfg)?;
        rows.push((mode.to_string(), summarize(&run)?));
    }
    Ok(Contrast { rows })
}

fn pct(x: f64) -> String {
    format!("{:.3}", 100.0 * x)
}

/// accuracy, precision, recall, F1 (percent).
pub fn summary_tsv(report: &EvalReport) -> String {
    format!(
        "accuracy\tprecision\trecall\tf1\n{}\t{}\t{}\t{}\n",
        pct(report.accuracy),
        pct(report.weighted_precision),
        pct(report.weighted_recall),
        pct(report.weighted_f1)
    )
}

pub fn per_class_tsv(report: &EvalReport) -> String {
    let mut out = String::from("type\tsupport\tpredicted\tprecision\trecall\tf1\tzero_predicted\n");
    for c in &report.per_class {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            c.label,
            c.support,
            c.predicted,
            pct(c.precision),
            pct(c.recall),
            pct(c.f1),
            c.zero_predicted
        ));
    }
    out
}

/// The thresholded estimator, kept under its own column names so it is not
/// confused with the weighted one-vs-rest precision.
pub fn threshold_tsv(rows: &[ThresholdRow]) -> String {
    let mut out = String::from("threshold\tannotations\tretained_precision\toverall_recall\tf1\n");
    for r in rows {
        out.push_str(&format!(
            "{:.1}\t{}\t{}\t{}\t{}\n",
            r.threshold,
            r.retained,
            pct(r.precision),
            pct(r.recall),
            pct(r.f1)
        ));
    }
    out
}

pub fn margin_tsv(rows: &[MarginRow]) -> String {
    let mut out = String::from("margin\taccuracy\tprecision\trecall\tf1\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.margin,
            pct(r.report.accuracy),
            pct(r.report.weighted_precision),
            pct(r.report.weighted_recall),
            pct(r.report.weighted_f1)
        ));
    }
    out
}

pub fn contrast_tsv(contrast: &Contrast) -> String {
    let mut out = String::from("model\ttraining\tvalidation\ttesting\tprecision\trecall\tf1\n");
    for (name, s) in &contrast.rows {
        out.push_str(&format!(
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            pct(s.train_accuracy),
            pct(s.valid_accuracy),
            pct(s.test.accuracy),
            pct(s.test.weighted_precision),
            pct(s.test.weighted_recall),
            pct(s.test.weighted_f1)
        ));
    }
    out
}

pub fn topk_tsv(eval: &Evaluation, ks: &[usize]) -> String {
    let mut out = String::from("k\trecall\n");
    for &k in ks {
        out.push_str(&format!("{k}\t{}\n", pct(eval.topk(k))));
    }
    out
}
