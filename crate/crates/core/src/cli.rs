//! Command-line front end.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::corpus::{self, LabeledSample};
use crate::engine::{self, AnnotationRecord, EmbeddingMode, TrainConfig, TypeModel};
use crate::eval;
use crate::lexer::LexError;
use crate::subword::{self, BpeVocab};

#[derive(Debug, Parser)]
#[command(name = "ctxtyper", version, about = "Infer Python variable types from their lexical context")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label assignment targets in a tree of .py files and write a corpus.
    BuildCorpus(BuildCorpusArgs),
    /// Train a byte-pair vocabulary on a corpus.
    TrainBpe(TrainBpeArgs),
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Annotate a file or directory with a trained checkpoint.
    Annotate(AnnotateArgs),
    /// Metrics, sweeps and ablations.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    pub src_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub margin: usize,
    #[arg(long, env = "CTXTYPER_SEED", default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Keep duplicate samples.
    #[arg(long)]
    pub no_dedup: bool,
    /// Fail on the first file that cannot be lexed.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct TrainBpeArgs {
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 2048)]
    pub bpe_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training configuration: defaults, then `--config`, then flags.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// key = value file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub margin: Option<usize>,
    #[arg(long)]
    pub tensor_len: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long, env = "CTXTYPER_SEED")]
    pub seed: Option<u64>,
    /// Feed only the variable name to the model.
    #[arg(long)]
    pub no_context: bool,
    #[arg(long, value_enum)]
    pub embedding: Option<EmbeddingArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EmbeddingArg {
    Bpe,
    WholeToken,
}

impl From<EmbeddingArg> for EmbeddingMode {
    fn from(e: EmbeddingArg) -> Self {
        match e {
            EmbeddingArg::Bpe => EmbeddingMode::Bpe,
            EmbeddingArg::WholeToken => EmbeddingMode::WholeToken,
        }
    }
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        if let Some(path) = &self.config {
            let text = read_input(path)?;
            c.apply_kv(&text).with_context(|| format!("in {}", path.display()))?;
        }
        macro_rules! over {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        over!(margin, tensor_len, classes, epochs, lr, batch_size, embed_dim, hidden_dim, seed);
        if self.no_context {
            c.context_enabled = false;
        }
        if let Some(e) = self.embedding {
            c.embedding = e.into();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub corpus: PathBuf,
    /// Required in bpe mode.
    #[arg(long)]
    pub bpe: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// A .py file or a directory searched recursively.
    pub path: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub bpe: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1)]
    pub topk: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Exit nonzero if any file fails to lex.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    Threshold,
    Margin,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction dump with gold labels.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub bpe: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub sweep: Option<Sweep>,
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512")]
    pub margins: Vec<usize>,
    /// Train with and without context and compare.
    #[arg(long)]
    pub ablate_context: bool,
    /// Train with BPE and whole-token embeddings and compare.
    #[arg(long)]
    pub compare_embedding: bool,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    pub topk: Vec<usize>,
    /// Directory for report files.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub version: String,
    pub duration_secs: f64,
    pub outputs: Vec<PathBuf>,
}

struct Run {
    command: &'static str,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config: serde_json::Value,
    seed: Option<u64>,
}

impl Run {
    fn new(command: &'static str, inputs: &[&Path]) -> Result<Self> {
        for p in inputs {
            if !p.exists() {
                bail!("input path does not exist: {}", p.display());
            }
        }
        Ok(Self {
            command,
            started: Instant::now(),
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            outputs: Vec::new(),
            config: serde_json::Value::Null,
            seed: None,
        })
    }

    fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
        std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn finish(self, manifest: &Path) -> Result<()> {
        let m = RunManifest {
            command: self.command.to_string(),
            config: self.config,
            inputs: self.inputs,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        let json = serde_json::to_string_pretty(&m)?;
        std::fs::write(manifest, json + "\n").with_context(|| format!("writing {}", manifest.display()))
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_input(path: &Path) -> Result<String> {
    if !path.exists() {
        bail!("input path does not exist: {}", path.display());
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// All `*.py` files under `root` in sorted order, or `root` itself if it is a file.
pub fn python_files(root: &Path) -> Result<Vec<PathBuf>> {
    if root.is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))?;
        for entry in entries {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "py") {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Apply `f` to every item on up to `jobs` threads; results keep input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn lex_source(path: &Path) -> std::result::Result<String, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    String::from_utf8(bytes).map_err(|e| {
        LexError::Encoding {
            offset: e.utf8_error().valid_up_to(),
        }
        .to_string()
    })
}

fn report_failures(failures: &[(PathBuf, String)], strict: bool) -> Result<()> {
    for (p, e) in failures {
        log::warn!("skipped {}: {e}", p.display());
    }
    if strict {
        if let Some((p, e)) = failures.first() {
            bail!("{}: {e}", p.display());
        }
    }
    Ok(())
}

pub fn build_corpus(args: &BuildCorpusArgs) -> Result<()> {
    let mut run = Run::new("build-corpus", &[&args.src_dir])?;
    run.seed = Some(args.seed);
    run.config = serde_json::json!({ "margin": args.margin, "dedup": !args.no_dedup });
    let files = python_files(&args.src_dir)?;
    let results = parallel_map(&files, args.jobs, |path| {
        let rel = path.strip_prefix(&args.src_dir).unwrap_or(path);
        let rel = if rel.as_os_str().is_empty() { path.file_name().map(Path::new).unwrap_or(path) } else { rel };
        lex_source(path)
            .and_then(|src| corpus::samples_from_source(rel, &src, args.margin).map_err(|e| e.to_string()))
    });
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (path, r) in files.iter().zip(results) {
        match r {
            Ok(s) => samples.extend(s),
            Err(e) => failures.push((path.clone(), e)),
        }
    }
    report_failures(&failures, args.strict)?;
    let stats = corpus::corpus_stats(&samples);
    if !args.no_dedup {
        samples = corpus::deduplicate(samples);
    }
    corpus::write_jsonl(&args.out, &samples)?;
    run.outputs.push(args.out.clone());
    run.write(&with_suffix(&args.out, ".stats.tsv"), stats.to_tsv())?;
    log::info!("{} files, {} samples written, {} skipped files", files.len(), samples.len(), failures.len());
    run.finish(&with_suffix(&args.out, ".manifest.json"))
}

/// The texts BPE is trained on: each sample's four segments.
pub fn bpe_training_texts(samples: &[LabeledSample]) -> Vec<String> {
    samples
        .iter()
        .map(|s| {
            let mut parts: Vec<&str> = Vec::new();
            parts.extend(s.before_ctx.iter().map(String::as_str));
            parts.extend(s.line_ctx.iter().map(String::as_str));
            parts.extend(s.after_ctx.iter().map(String::as_str));
            parts.push(&s.var_name);
            parts.join(" ")
        })
        .collect()
}

pub fn train_bpe(args: &TrainBpeArgs) -> Result<()> {
    let mut run = Run::new("train-bpe", &[&args.corpus])?;
    run.config = serde_json::json!({ "bpe_size": args.bpe_size });
    let samples = corpus::read_jsonl(&args.corpus)?;
    let vocab = subword::train_bpe(&bpe_training_texts(&samples), args.bpe_size)?;
    vocab.save(&args.out)?;
    run.outputs.push(args.out.clone());
    run.finish(&with_suffix(&args.out, ".manifest.json"))
}

fn load_bpe(path: Option<&Path>, needed: bool) -> Result<Option<BpeVocab>> {
    match path {
        Some(p) => {
            if !p.exists() {
                bail!("input path does not exist: {}", p.display());
            }
            Ok(Some(BpeVocab::load(p)?))
        }
        None if needed => bail!("bpe embedding mode needs --bpe <vocab file>"),
        None => Ok(None),
    }
}

fn config_json(c: &TrainConfig) -> serde_json::Value {
    serde_json::to_value(c).expect("config serializes")
}

fn narrowed(samples: Vec<LabeledSample>, margin: usize) -> Vec<LabeledSample> {
    samples.into_iter().map(|s| s.with_margin(margin)).collect()
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let mut inputs: Vec<&Path> = vec![&args.corpus];
    inputs.extend(args.bpe.as_deref());
    let mut run = Run::new("train", &inputs)?;
    run.config = config_json(&config);
    run.seed = Some(config.seed);
    let bpe = load_bpe(args.bpe.as_deref(), config.embedding == EmbeddingMode::Bpe)?;
    let samples = narrowed(corpus::read_jsonl(&args.corpus)?, config.margin);
    let result = engine::run_training(samples, bpe.as_ref(), &config)?;
    result.model.save(&args.out)?;
    run.outputs.push(args.out.clone());
    run.write(&with_suffix(&args.out, ".log.tsv"), engine::log_tsv(&result.log))?;
    let k = result.model.types.len().min(5);
    let dump = eval::dump_records(&result.model, &result.test_samples, &result.test, k)?;
    let dump_path = with_suffix(&args.out, ".test.jsonl");
    eval::write_jsonl(&dump_path, &dump)?;
    run.outputs.push(dump_path);
    if let Some(best) = result.best_epoch {
        log::info!("best validation accuracy at epoch {best}");
    }
    run.finish(&with_suffix(&args.out, ".manifest.json"))
}

pub fn load_model(ckpt: &Path, bpe: Option<&Path>) -> Result<TypeModel> {
    if !ckpt.exists() {
        bail!("input path does not exist: {}", ckpt.display());
    }
    let vocab = load_bpe(bpe, false)?;
    TypeModel::load(ckpt, vocab.as_ref()).with_context(|| format!("loading {}", ckpt.display()))
}

/// Annotation records for every file, in file order, plus lex failures.
pub fn annotate_files(
    model: &TypeModel,
    files: &[PathBuf],
    threshold: f64,
    k: usize,
    jobs: usize,
) -> (Vec<AnnotationRecord>, Vec<(PathBuf, String)>) {
    let results = parallel_map(files, jobs, |path| {
        lex_source(path).and_then(|src| {
            model
                .annotate_source(path, &src, threshold, k)
                .map_err(|e| e.to_string())
        })
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (path, r) in files.iter().zip(results) {
        match r {
            Ok(preds) => records.extend(preds.iter().map(AnnotationRecord::from)),
            Err(e) => failures.push((path.clone(), e)),
        }
    }
    (records, failures)
}

pub fn annotate(args: &AnnotateArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.threshold) {
        bail!("--threshold must lie in [0, 1]");
    }
    let mut inputs: Vec<&Path> = vec![&args.path, &args.ckpt];
    inputs.extend(args.bpe.as_deref());
    let mut run = Run::new("annotate", &inputs)?;
    let model = load_model(&args.ckpt, args.bpe.as_deref())?;
    run.config = serde_json::json!({
        "model": config_json(&model.config),
        "threshold": args.threshold,
        "topk": args.topk,
    });
    run.seed = Some(model.config.seed);
    let files = python_files(&args.path)?;
    let k = args.topk.clamp(1, model.types.len());
    let (records, failures) = annotate_files(&model, &files, args.threshold, k, args.jobs);
    report_failures(&failures, args.strict)?;
    eval::write_jsonl(&args.out, &records)?;
    run.outputs.push(args.out.clone());
    log::info!("{} annotations from {} files", records.len(), files.len());
    run.finish(&with_suffix(&args.out, ".manifest.json"))
}

fn write_eval_reports(run: &mut Run, out: &Path, e: &eval::Evaluation, ks: &[usize], sweep: bool) -> Result<()> {
    run.write(&out.join("summary.tsv"), eval::summary_tsv(&e.report))?;
    run.write(&out.join("per_class.tsv"), eval::per_class_tsv(&e.report))?;
    run.write(&out.join("topk.tsv"), eval::topk_tsv(e, ks))?;
    if sweep {
        let rows = eval::threshold_sweep(&e.scored, &eval::default_thresholds())?;
        run.write(&out.join("threshold.tsv"), eval::threshold_tsv(&rows))?;
    }
    Ok(())
}

pub fn evaluate(args: &EvalArgs) -> Result<()> {
    let mut inputs: Vec<&Path> = Vec::new();
    inputs.extend(args.dump.as_deref());
    inputs.extend(args.ckpt.as_deref());
    inputs.extend(args.corpus.as_deref());
    inputs.extend(args.bpe.as_deref());
    let mut run = Run::new("eval", &inputs)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let threshold_sweep = args.sweep == Some(Sweep::Threshold);
    let mut did_something = false;

    if let Some(dump) = &args.dump {
        let records = eval::read_dump(dump)?;
        let e = eval::evaluate_dump(&records)?;
        write_eval_reports(&mut run, &args.out, &e, &args.topk, threshold_sweep)?;
        did_something = true;
    }

    if let Some(ckpt) = &args.ckpt {
        let Some(corpus_path) = &args.corpus else {
            bail!("--ckpt needs --corpus to rebuild the test split");
        };
        let model = load_model(ckpt, args.bpe.as_deref())?;
        let samples = narrowed(corpus::read_jsonl(corpus_path)?, model.config.margin);
        let (_, parts) = engine::split_samples(samples, &model.config)?;
        let (test, _) = engine::encode_samples(&parts.test, &model.encoder, &model.types, &model.config);
        let e = eval::evaluate(&model, &test)?;
        write_eval_reports(&mut run, &args.out, &e, &args.topk, threshold_sweep)?;
        run.config = config_json(&model.config);
        run.seed = Some(model.config.seed);
        did_something = true;
    }

    let trains = args.sweep == Some(Sweep::Margin) || args.ablate_context || args.compare_embedding;
    if trains {
        let Some(corpus_path) = &args.corpus else {
            bail!("sweeps and ablations need --corpus");
        };
        let config = args.config.resolve()?;
        run.config = config_json(&config);
        run.seed = Some(config.seed);
        let needs_bpe = config.embedding == EmbeddingMode::Bpe || args.compare_embedding;
        let bpe = load_bpe(args.bpe.as_deref(), needs_bpe)?;
        let samples = corpus::read_jsonl(corpus_path)?;
        if args.sweep == Some(Sweep::Margin) {
            let rows = eval::margin_sweep(&config, &samples, bpe.as_ref(), &args.margins)?;
            run.write(&args.out.join("margin.tsv"), eval::margin_tsv(&rows))?;
        }
        let samples = narrowed(samples, config.margin);
        if args.ablate_context {
            let c = eval::ablation_context(&config, &samples, bpe.as_ref())?;
            run.write(&args.out.join("ablation_context.tsv"), eval::contrast_tsv(&c))?;
        }
        if args.compare_embedding {
            let bpe = bpe.as_ref().expect("checked above");
            let c = eval::embedding_contrast(&config, &samples, bpe)?;
            run.write(&args.out.join("embedding.tsv"), eval::contrast_tsv(&c))?;
        }
        did_something = true;
    }

    if !did_something {
        bail!("nothing to evaluate: pass --dump, --ckpt with --corpus, --sweep margin, --ablate-context or --compare-embedding");
    }
    run.finish(&args.out.join("manifest.json"))
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::BuildCorpus(a) => build_corpus(a),
        Command::TrainBpe(a) => train_bpe(a),
        Command::Train(a) => train(a),
        Command::Annotate(a) => annotate(a),
        Command::Eval(a) => evaluate(a),
    }
}
