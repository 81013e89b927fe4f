//! Training, prediction, file annotation and checkpoints.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{self, ContextError, ContextWindow, ModelInput};
use crate::corpus::{self, CorpusError, LabeledSample, RawAnnotation, TypeVocab};
use crate::lexer::{self, LexError};
use crate::nn::{self, AdamConfig, AdamState, Dropout, Example, ModelDims, ModelParams, NnError};
use crate::subword::{BpeVocab, Encoder, TokenEncoder, WholeTokenVocab};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("training diverged in epoch {epoch}: {source}")]
    Diverged { epoch: usize, source: NnError },
    #[error("checkpoint is corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint is incompatible: {0}")]
    Incompatible(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    Bpe,
    WholeToken,
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingMode::Bpe => "bpe",
            EmbeddingMode::WholeToken => "whole_token",
        })
    }
}

impl FromStr for EmbeddingMode {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bpe" => Ok(EmbeddingMode::Bpe),
            "whole_token" => Ok(EmbeddingMode::WholeToken),
            other => Err(EngineError::Config(format!("unknown embedding mode {other:?}"))),
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: usize,
    pub tensor_len: usize,
    pub bpe_size: usize,
    pub classes: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub context_enabled: bool,
    pub embedding: EmbeddingMode,
    /// Vocabulary cap for the whole-token baseline.
    pub whole_token_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 128,
            tensor_len: 512,
            bpe_size: 2048,
            classes: 500,
            embed_dim: 64,
            hidden_dim: 128,
            dropout: 0.1,
            lr: 1e-4,
            batch_size: 32,
            epochs: 10,
            seed: 42,
            context_enabled: true,
            embedding: EmbeddingMode::Bpe,
            whole_token_cap: 20_000,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, EngineError> {
    value
        .parse()
        .map_err(|_| EngineError::Config(format!("bad value {value:?} for {key}")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 14] = [
        "margin", "tensor_len", "bpe_size", "classes", "embed_dim", "hidden_dim", "dropout", "lr",
        "batch_size", "epochs", "seed", "context_enabled", "embedding", "whole_token_cap",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), EngineError> {
        let v = value.trim();
        match key.trim() {
            "margin" => self.margin = parse_value(key, v)?,
            "tensor_len" => self.tensor_len = parse_value(key, v)?,
            "bpe_size" => self.bpe_size = parse_value(key, v)?,
            "classes" => self.classes = parse_value(key, v)?,
            "embed_dim" => self.embed_dim = parse_value(key, v)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "context_enabled" => self.context_enabled = parse_value(key, v)?,
            "embedding" => self.embedding = v.parse()?,
            "whole_token_cap" => self.whole_token_cap = parse_value(key, v)?,
            other => return Err(EngineError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), EngineError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| EngineError::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.pairs() {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("margin", self.margin.to_string()),
            ("tensor_len", self.tensor_len.to_string()),
            ("bpe_size", self.bpe_size.to_string()),
            ("classes", self.classes.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("dropout", format!("{:?}", self.dropout)),
            ("lr", format!("{:?}", self.lr)),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("context_enabled", self.context_enabled.to_string()),
            ("embedding", self.embedding.to_string()),
            ("whole_token_cap", self.whole_token_cap.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.classes < 2 {
            return bad("need at least 2 classes");
        }
        if self.tensor_len < 4 {
            return bad("tensor_len must leave room for three separators and a name");
        }
        Ok(())
    }
}

/// A sample ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub input: ModelInput,
    pub label: usize,
}

/// Assemble the model input for a window, honoring the context switch.
pub fn build_input(
    window: &ContextWindow,
    encoder: &Encoder,
    config: &TrainConfig,
) -> Result<ModelInput, ContextError> {
    if config.context_enabled {
        context::assemble(window, encoder, config.tensor_len)
    } else {
        context::assemble_name_only(&window.name, encoder, config.tensor_len)
    }
}

/// Encode samples with in-vocabulary labels, dropping those that cannot fit
/// `tensor_len`. Returns the encodings and the indices they came from.
pub fn encode_samples(
    samples: &[LabeledSample],
    encoder: &Encoder,
    types: &TypeVocab,
    config: &TrainConfig,
) -> (Vec<Encoded>, Vec<usize>) {
    let mut out = Vec::new();
    let mut kept = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let Some(label) = types.id(&s.type_label) else { continue };
        match build_input(&s.window(), encoder, config) {
            Ok(input) => {
                out.push(Encoded { input, label });
                kept.push(i);
            }
            Err(e) => log::debug!("dropping {}:{}: {e}", s.file.display(), s.line),
        }
    }
    (out, kept)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
}

pub fn log_tsv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch\ttrain_loss\ttrain_accuracy\tvalid_accuracy\n");
    for e in log {
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\n",
            e.epoch, e.train_loss, e.train_accuracy, e.valid_accuracy
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
}

/// Top-1 accuracy of `params` on `set`, without dropout.
pub fn accuracy_on(params: &ModelParams, set: &[Encoded]) -> Result<f64, NnError> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for e in set {
        correct += usize::from(nn::forward(params, &e.input.ids, None)?.argmax == e.label);
    }
    Ok(correct as f64 / set.len() as f64)
}

/// Mini-batch Adam on the summed negative log-likelihood.
pub fn train(
    config: &TrainConfig,
    dims: ModelDims,
    train_set: &[Encoded],
    valid_set: &[Encoded],
) -> Result<TrainOutcome, EngineError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(EngineError::EmptySet("training"));
    }
    if valid_set.is_empty() {
        return Err(EngineError::EmptySet("validation"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(dims, &mut rng);
    let mut best = params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut adam = AdamState::new(&params);
    let mut grads = ModelParams::zeros(dims);
    let adam_cfg = AdamConfig::with_lr(config.lr);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            grads.fill(0.0);
            let batch: Vec<Example<'_>> = chunk
                .iter()
                .map(|&i| Example {
                    ids: &train_set[i].input.ids,
                    label: train_set[i].label,
                    dropout: Some(Dropout { rate: config.dropout, seed: rng.gen() }),
                })
                .collect();
            let result = nn::batch_gradients(&params, &batch, &mut grads)
                .map_err(|source| EngineError::Diverged { epoch, source })?;
            total_loss += result.loss;
            nn::adam_step(&mut params, &grads, &mut adam, adam_cfg)?;
        }
        let diverged = |source| EngineError::Diverged { epoch, source };
        params.check_finite().map_err(diverged)?;
        let entry = EpochLog {
            epoch,
            train_loss: total_loss / train_set.len() as f64,
            train_accuracy: accuracy_on(&params, train_set).map_err(diverged)?,
            valid_accuracy: accuracy_on(&params, valid_set).map_err(diverged)?,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train {:.4} valid {:.4}",
            entry.train_loss,
            entry.train_accuracy,
            entry.valid_accuracy
        );
        if entry.valid_accuracy > best_acc {
            best_acc = entry.valid_accuracy;
            best = params.clone();
            best_epoch = Some(epoch);
        }
        log.push(entry);
    }
    Ok(TrainOutcome {
        params: best,
        log,
        best_epoch,
    })
}

/// A ranked type annotation for one variable occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub var_name: String,
    pub file: PathBuf,
    pub line: usize,
    /// `(label, probability)`, descending, truncated to k.
    pub ranked: Vec<(String, f64)>,
    pub top1: String,
    pub top1_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedType {
    #[serde(rename = "type")]
    pub type_label: String,
    pub prob: f64,
}

/// One line of annotation output. `gold` is present in evaluation dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub file: PathBuf,
    pub line: usize,
    pub var_name: String,
    #[serde(rename = "type")]
    pub type_label: String,
    pub prob: f64,
    pub topk: Vec<RankedType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

impl From<&Prediction> for AnnotationRecord {
    fn from(p: &Prediction) -> Self {
        Self {
            file: p.file.clone(),
            line: p.line,
            var_name: p.var_name.clone(),
            type_label: p.top1.clone(),
            prob: p.top1_prob,
            topk: p
                .ranked
                .iter()
                .map(|(t, prob)| RankedType { type_label: t.clone(), prob: *prob })
                .collect(),
            gold: None,
        }
    }
}

/// A trained classifier with everything needed to run it.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeModel {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub types: TypeVocab,
    pub encoder: Encoder,
}

impl TypeModel {
    pub fn input_for(&self, window: &ContextWindow) -> Result<ModelInput, ContextError> {
        build_input(window, &self.encoder, &self.config)
    }

    /// Full softmax over all classes, ranked and truncated to `k`.
    pub fn predict(&self, input: &ModelInput, k: usize) -> Result<Prediction, EngineError> {
        let fwd = nn::forward(&self.params, &input.ids, None)?;
        let mut order: Vec<usize> = (0..fwd.probs.len()).collect();
        order.sort_by(|&a, &b| fwd.probs[b].total_cmp(&fwd.probs[a]).then(a.cmp(&b)));
        let ranked: Vec<(String, f64)> = order
            .iter()
            .take(k.max(1))
            .map(|&c| (self.types.label(c).to_string(), fwd.probs[c]))
            .collect();
        Ok(Prediction {
            var_name: String::new(),
            file: PathBuf::new(),
            line: 0,
            top1: ranked[0].0.clone(),
            top1_prob: ranked[0].1,
            ranked,
        })
    }

    /// Annotate every assignment target of a source file whose top-1
    /// probability reaches `threshold`.
    pub fn annotate_source(
        &self,
        file: &Path,
        source: &str,
        threshold: f64,
        k: usize,
    ) -> Result<Vec<Prediction>, EngineError> {
        let tokens = lexer::tokenize(source)?;
        let mut out = Vec::new();
        for target in corpus::discover_targets(&tokens) {
            let tok = &tokens[target.name];
            let site = RawAnnotation {
                file: file.to_path_buf(),
                var_name: tok.text.clone(),
                line: tok.line,
                col_start: tok.col_start,
                col_end: tok.col_end,
                type_label: String::new(),
            };
            let window = context::extract_window(&tokens, &site, self.config.margin)?;
            let input = match self.input_for(&window) {
                Ok(input) => input,
                Err(e) => {
                    log::warn!("{}:{}: skipped: {e}", file.display(), site.line);
                    continue;
                }
            };
            let mut p = self.predict(&input, k)?;
            if p.top1_prob >= threshold {
                p.var_name = site.var_name;
                p.file = site.file;
                p.line = site.line;
                out.push(p);
            }
        }
        Ok(out)
    }

    pub fn dims(&self) -> ModelDims {
        self.params.dims()
    }

    /// Serialize to the checkpoint format: header line, `key=value` config
    /// block ended by a blank line, parameter blocks as little-endian `f64`
    /// in declaration order, then a CRC32 of everything before it.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let d = self.dims();
        let mut head = String::from(CKPT_MAGIC);
        head.push('\n');
        head.push_str(&self.config.to_kv());
        let mut meta = vec![
            ("vocab_size", d.vocab_size.to_string()),
            ("model_embed_dim", d.embed_dim.to_string()),
            ("model_hidden_dim", d.hidden_dim.to_string()),
            ("model_classes", d.classes.to_string()),
            ("type_labels", serde_json::to_string(self.types.labels()).expect("strings serialize")),
        ];
        match &self.encoder {
            Encoder::Bpe(v) => meta.push(("bpe_fingerprint", format!("{:08x}", v.fingerprint()))),
            Encoder::WholeToken(v) => {
                meta.push(("whole_tokens", serde_json::to_string(v.tokens()).expect("strings serialize")))
            }
        }
        for (k, v) in meta {
            head.push_str(&format!("{k}={v}\n"));
        }
        head.push('\n');
        let mut bytes = head.into_bytes();
        for block in self.params.blocks() {
            for v in block {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        bytes
    }

    /// Parse a checkpoint. BPE checkpoints need the vocabulary they were
    /// trained with; whole-token checkpoints carry their own.
    pub fn from_checkpoint_bytes(bytes: &[u8], bpe: Option<&BpeVocab>) -> Result<Self, EngineError> {
        let corrupt = |m: &str| EngineError::Corrupt(m.to_string());
        if bytes.len() < 4 {
            return Err(corrupt("file too short"));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body).to_le_bytes() != crc {
            return Err(corrupt("checksum mismatch"));
        }
        let split = body
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| corrupt("missing config block terminator"))?;
        let head = std::str::from_utf8(&body[..split]).map_err(|_| corrupt("config block is not UTF-8"))?;
        let mut lines = head.lines();
        if lines.next() != Some(CKPT_MAGIC) {
            return Err(corrupt("bad header"));
        }
        let mut config = TrainConfig::default();
        let mut meta = BTreeMap::new();
        for line in lines {
            let (k, v) = line.split_once('=').ok_or_else(|| corrupt("bad config line"))?;
            if TrainConfig::KEYS.contains(&k) {
                config.set(k, v)?;
            } else {
                meta.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| meta.get(k).ok_or_else(|| EngineError::Corrupt(format!("missing {k}")));
        let num = |k: &str| -> Result<usize, EngineError> {
            get(k)?.parse().map_err(|_| EngineError::Corrupt(format!("bad {k}")))
        };
        let dims = ModelDims {
            vocab_size: num("vocab_size")?,
            embed_dim: num("model_embed_dim")?,
            hidden_dim: num("model_hidden_dim")?,
            classes: num("model_classes")?,
        };
        let labels: Vec<String> =
            serde_json::from_str(get("type_labels")?).map_err(|_| corrupt("bad type_labels"))?;
        if labels.len() != dims.classes {
            return Err(corrupt("label count disagrees with class count"));
        }
        let encoder = match config.embedding {
            EmbeddingMode::Bpe => {
                let v = bpe.ok_or_else(|| {
                    EngineError::Incompatible("a BPE vocabulary is required for this checkpoint".into())
                })?;
                let want = get("bpe_fingerprint")?;
                if v.size() != dims.vocab_size || &format!("{:08x}", v.fingerprint()) != want {
                    return Err(EngineError::Incompatible(format!(
                        "vocabulary (size {}) is not the one the model was trained with (size {})",
                        v.size(),
                        dims.vocab_size
                    )));
                }
                Encoder::Bpe(v.clone())
            }
            EmbeddingMode::WholeToken => {
                let tokens: Vec<String> =
                    serde_json::from_str(get("whole_tokens")?).map_err(|_| corrupt("bad whole_tokens"))?;
                let v = WholeTokenVocab::from_tokens(tokens);
                if v.vocab_size() != dims.vocab_size {
                    return Err(corrupt("whole-token vocabulary size disagrees"));
                }
                Encoder::WholeToken(v)
            }
        };
        let mut params = ModelParams::zeros(dims);
        let payload = &body[split + 2..];
        if payload.len() != params.num_params() * 8 {
            return Err(corrupt("parameter payload has the wrong length"));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        for block in params.blocks_mut() {
            for (slot, v) in block.iter_mut().zip(&mut values) {
                *slot = v;
            }
        }
        Ok(Self {
            config,
            params,
            types: TypeVocab::from_labels(labels),
            encoder,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        std::fs::write(path, self.to_checkpoint_bytes()).map_err(|source| EngineError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path, bpe: Option<&BpeVocab>) -> Result<Self, EngineError> {
        let bytes = std::fs::read(path).map_err(|source| EngineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_checkpoint_bytes(&bytes, bpe)
    }
}

pub const CKPT_MAGIC: &str = "ctxtyper-ckpt-v1";

/// A full run: type vocabulary, split, encoder fitting, training.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub model: TypeModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub test_samples: Vec<LabeledSample>,
    pub test: Vec<Encoded>,
    pub valid: Vec<Encoded>,
    pub train: Vec<Encoded>,
}

/// The encoder to use: a trained BPE vocabulary, or a whole-token
/// vocabulary fitted on the training split.
pub fn fit_encoder(
    config: &TrainConfig,
    bpe: Option<&BpeVocab>,
    train_samples: &[LabeledSample],
) -> Result<Encoder, EngineError> {
    match config.embedding {
        EmbeddingMode::Bpe => bpe
            .cloned()
            .map(Encoder::Bpe)
            .ok_or_else(|| EngineError::Config("bpe mode needs a BPE vocabulary".into())),
        EmbeddingMode::WholeToken => {
            let texts = train_samples.iter().flat_map(|s| {
                s.before_ctx
                    .iter()
                    .chain(&s.line_ctx)
                    .chain(&s.after_ctx)
                    .map(String::as_str)
                    .chain(std::iter::once(s.var_name.as_str()))
            });
            Ok(Encoder::WholeToken(WholeTokenVocab::build(texts, config.whole_token_cap)))
        }
    }
}

/// The type vocabulary over the whole corpus and the seeded split of the
/// samples whose label is in it.
pub fn split_samples(
    samples: Vec<LabeledSample>,
    config: &TrainConfig,
) -> Result<(TypeVocab, corpus::Split<LabeledSample>), EngineError> {
    let types = corpus::build_type_vocab(&samples, config.classes)?;
    let kept: Vec<LabeledSample> = samples.into_iter().filter(|s| types.contains(&s.type_label)).collect();
    Ok((types, corpus::split(kept, config.seed)?))
}

/// Type vocabulary over the whole corpus, drop out-of-vocabulary labels,
/// seeded split, fit the encoder on the training part, train.
pub fn run_training(
    samples: Vec<LabeledSample>,
    bpe: Option<&BpeVocab>,
    config: &TrainConfig,
) -> Result<TrainRun, EngineError> {
    config.validate()?;
    let (types, parts) = split_samples(samples, config)?;
    let encoder = fit_encoder(config, bpe, &parts.train)?;
    let (train_set, _) = encode_samples(&parts.train, &encoder, &types, config);
    let (valid_set, _) = encode_samples(&parts.valid, &encoder, &types, config);
    let (test_set, test_idx) = encode_samples(&parts.test, &encoder, &types, config);
    let dims = ModelDims {
        vocab_size: encoder.vocab_size(),
        embed_dim: config.embed_dim,
        hidden_dim: config.hidden_dim,
        classes: types.len(),
    };
    let outcome = train(config, dims, &train_set, &valid_set)?;
    let test_samples = test_idx.into_iter().map(|i| parts.test[i].clone()).collect();
    Ok(TrainRun {
        model: TypeModel {
            config: config.clone(),
            params: outcome.params,
            types,
            encoder,
        },
        log: outcome.log,
        best_epoch: outcome.best_epoch,
        test_samples,
        test: test_set,
        valid: valid_set,
        train: train_set,
    })
}
