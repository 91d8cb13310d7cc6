//! `diffusum` command-line frontend. Argument types and command bodies live
//! here so integration tests can drive them without spawning processes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use diffusum::corpus::{
    greedy_oracle, load_corpus, read_labels, write_labels, DatasetManifest, DocumentRecord, LabelLine, OracleLabels,
};
use diffusum::embedding::{EmbeddingCache, EmbeddingProvider, HashingEmbedder};
use diffusum::extract::{export_representations, infer, lead_baseline, oracle_baseline, record_seed, selection_triple};
use diffusum::rouge::RougeTriple;
use diffusum::train::{prepare_examples, train};
use diffusum::{Checkpoint, TrainConfig};

pub const DEFAULT_SEED: u64 = 101;
pub const CACHE_DIR_ENV: &str = "DIFFUSUM_CACHE_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] diffusum::Error),
}

impl CliError {
    /// 2 usage, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numeric() => 4,
            CliError::Core(diffusum::Error::Config(_)) => 2,
            CliError::Core(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(diffusum::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "diffusum",
    version,
    about = "Extractive summarization with generated sentence representations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build greedy ORACLE labels for a corpus
    Prepare(PrepareArgs),
    /// Train a model and write the best checkpoint
    Train(TrainArgs),
    /// Extract summaries with a trained checkpoint
    Infer(InferArgs),
    /// Score systems (diffusum, lead, oracle) with ROUGE
    Eval(EvalArgs),
    /// Export encoded and generated sentence representations
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    Hashing,
    Precomputed,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    /// Sentence embedder
    #[arg(long, value_enum, default_value = "hashing")]
    pub embedder: EmbedderKind,
    /// Precomputed embedding cache (defaults to $DIFFUSUM_CACHE_DIR/<corpus stem>.dsemb)
    #[arg(long)]
    pub embed_cache: Option<PathBuf>,
}

impl Default for EmbedArgs {
    fn default() -> Self {
        Self {
            embedder: EmbedderKind::Hashing,
            embed_cache: None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Labels file to write (JSONL)
    #[arg(long)]
    pub out: PathBuf,
    /// Cap on ORACLE size; defaults to the dataset extract count, then the
    /// reference length of each record
    #[arg(long)]
    pub max_sentences: Option<usize>,
    /// Dataset name used to look up the extract count (cnndm, xsum, pubmed)
    /// Dataset name (cnndm, xsum, pubmed) used to look up the extract count
    #[arg(long)]
    pub dataset: Option<String>,
    /// Read at most this many records
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Config file (TOML key = value); defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training corpus (JSONL)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Validation corpus; the training corpus is reused when omitted
    #[arg(long)]
    pub val_corpus: Option<PathBuf>,
    /// ORACLE labels for the training corpus; computed on the fly when omitted
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Checkpoint to write
    #[arg(long)]
    pub out: PathBuf,
    /// Training log (JSON lines); printed to stdout when omitted
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset name (cnndm, xsum, pubmed) used to look up the extract count
    #[arg(long)]
    pub dataset: Option<String>,
    /// Read at most this many records
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Sentences to extract per document
    #[arg(long)]
    pub m: Option<usize>,
    /// Dataset name (cnndm, xsum, pubmed) used to look up the extract count
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output JSONL; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Read at most this many records
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Required when the diffusum system is requested
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// ORACLE labels; computed greedily with cap m when omitted
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Dataset name (cnndm, xsum, pubmed) used to look up the extract count
    #[arg(long)]
    pub dataset: Option<String>,
    /// Comma-separated systems: diffusum, lead, oracle
    #[arg(long, value_delimiter = ',', default_value = "diffusum,lead,oracle")]
    pub systems: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Report JSON path (also printed to stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Read at most this many records
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Representation export (JSONL, one row per line)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub m: Option<usize>,
    /// Dataset name (cnndm, xsum, pubmed) used to look up the extract count
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 25)]
    pub limit: usize,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&a, stdout).map(drop),
        Command::Train(a) => cmd_train(&a, stdout).map(drop),
        Command::Infer(a) => cmd_infer(&a, stdout).map(drop),
        Command::Eval(a) => cmd_eval(&a, stdout).map(drop),
        Command::Diagnose(a) => cmd_diagnose(&a, stdout).map(drop),
    }
}

fn write_json_line<T: Serialize>(w: &mut dyn Write, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string(value).expect("value serializes");
    writeln!(w, "{text}")
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn load_records(path: &Path, limit: Option<usize>) -> CliResult<Vec<DocumentRecord>> {
    let loaded = load_corpus(path, limit)?;
    if loaded.skipped > 0 {
        log::warn!("{}: skipped {} empty records", path.display(), loaded.skipped);
    }
    if loaded.records.is_empty() {
        return Err(diffusum::Error::InvalidInput(format!("{} contains no usable records", path.display())).into());
    }
    Ok(loaded.records)
}

/// Labels for `records` from a labels file, matched by id.
fn labels_for(records: &[DocumentRecord], path: &Path) -> CliResult<Vec<OracleLabels>> {
    let by_id: BTreeMap<String, Vec<usize>> = read_labels(path)?.into_iter().map(|l| (l.id, l.oracle)).collect();
    records
        .iter()
        .map(|r| {
            let indices = by_id.get(&r.id).ok_or_else(|| {
                diffusum::Error::InvalidInput(format!("{}: no labels for record {:?}", path.display(), r.id))
            })?;
            let labels = OracleLabels::from_indices(indices.clone());
            labels.validate(r.n())?;
            Ok(labels)
        })
        .collect()
}

fn resolve_m(m: Option<usize>, corpus: &Path, dataset: Option<&str>, records: usize) -> CliResult<usize> {
    let manifest = DatasetManifest::describe(corpus, dataset, records);
    match m.or(manifest.extract_count) {
        Some(0) => Err(usage("--m must be at least 1")),
        Some(m) => Ok(m),
        None => Err(usage(format!(
            "no extract count known for {}; pass --m or --dataset",
            corpus.display()
        ))),
    }
}

/// Builds the embedding provider for a corpus.
pub fn make_provider(args: &EmbedArgs, corpus: &Path, dim: usize, hash_seed: u64) -> CliResult<EmbeddingProvider> {
    match args.embedder {
        EmbedderKind::Hashing => Ok(EmbeddingProvider::Hashing(HashingEmbedder::new(dim, hash_seed))),
        EmbedderKind::Precomputed => {
            let path = match &args.embed_cache {
                Some(p) => p.clone(),
                None => {
                    let dir = std::env::var_os(CACHE_DIR_ENV).ok_or_else(|| {
                        usage(format!("--embedder precomputed needs --embed-cache or {CACHE_DIR_ENV}"))
                    })?;
                    let stem = corpus.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    PathBuf::from(dir).join(format!("{stem}.dsemb"))
                }
            };
            let cache = EmbeddingCache::load(&path)?;
            if cache.dim != dim {
                return Err(diffusum::Error::CacheFormat(format!(
                    "{} holds {}-dim vectors but the model expects {dim}",
                    path.display(),
                    cache.dim
                ))
                .into());
            }
            Ok(EmbeddingProvider::Precomputed(cache))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub records: usize,
    /// ORACLE size → number of records.
    pub histogram: BTreeMap<usize, usize>,
}

pub fn cmd_prepare(args: &PrepareArgs, stdout: &mut dyn Write) -> CliResult<PrepareSummary> {
    if args.max_sentences == Some(0) {
        return Err(usage("--max-sentences must be at least 1"));
    }
    let records = load_records(&args.corpus, args.limit)?;
    let manifest = DatasetManifest::describe(&args.corpus, args.dataset.as_deref(), records.len());
    let cap = args.max_sentences.or(manifest.extract_count);
    let lines: Vec<LabelLine> = records
        .iter()
        .map(|r| LabelLine {
            id: r.id.clone(),
            oracle: greedy_oracle(r, cap.unwrap_or(r.summary_sentences.len())).oracle_indices,
        })
        .collect();
    write_labels(&args.out, &lines)?;
    let mut histogram = BTreeMap::new();
    for l in &lines {
        *histogram.entry(l.oracle.len()).or_insert(0) += 1;
    }
    let summary = PrepareSummary {
        records: lines.len(),
        histogram,
    };
    write_json_line(stdout, &summary).map_err(|e| io_err(Path::new("<stdout>"), e))?;
    Ok(summary)
}

pub fn cmd_train(args: &TrainArgs, stdout: &mut dyn Write) -> CliResult<Checkpoint> {
    let mut config = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let records = load_records(&args.corpus, args.limit)?;
    let val_path = args.val_corpus.as_deref().unwrap_or(&args.corpus);
    let val_records = match &args.val_corpus {
        Some(p) => load_records(p, args.limit)?,
        None => records.clone(),
    };
    if config.extract_count.is_none() {
        config.extract_count =
            DatasetManifest::describe(val_path, args.dataset.as_deref(), val_records.len()).extract_count;
    }
    let provider = make_provider(&args.embed, &args.corpus, config.embed_dim, config.hash_seed)?;
    let labels = args.labels.as_deref().map(|p| labels_for(&records, p)).transpose()?;
    let examples = prepare_examples(&records, labels.as_deref(), &provider, &config)?;

    let mut log_file = args.log.as_deref().map(create).transpose()?;
    let mut log_error = None;
    let outcome = train(&config, &examples, &val_records, &provider, |step| {
        let sink: &mut dyn Write = match log_file.as_mut() {
            Some(f) => f,
            None => &mut *stdout,
        };
        if let Err(e) = write_json_line(sink, step) {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(io_err(args.log.as_deref().unwrap_or(Path::new("<stdout>")), e));
    }
    if let (Some(f), Some(p)) = (log_file.as_mut(), args.log.as_deref()) {
        f.flush().map_err(|e| io_err(p, e))?;
    }
    outcome.best.save(&args.out)?;
    log::info!("best epoch {} written to {}", outcome.best.epoch, args.out.display());
    Ok(outcome.best)
}

/// One line of the inference output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceLine {
    pub id: String,
    pub indices: Vec<usize>,
    pub sentences: Vec<String>,
    pub seed: u64,
}

fn run_inference(
    ck: &Checkpoint,
    provider: &EmbeddingProvider,
    records: &[DocumentRecord],
    m: usize,
    seed: u64,
) -> CliResult<Vec<InferenceLine>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let s = record_seed(seed, i);
            let res = infer(&ck.model, provider, r, m, s)?;
            if res.truncated {
                log::warn!("record {:?}: m={m} exceeds its {} sentences", r.id, r.n());
            }
            Ok(InferenceLine {
                id: r.id.clone(),
                sentences: res.indices.iter().map(|&k| r.doc_sentences[k].join(" ")).collect(),
                indices: res.indices,
                seed: s,
            })
        })
        .collect()
}

pub fn cmd_infer(args: &InferArgs, stdout: &mut dyn Write) -> CliResult<Vec<InferenceLine>> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let records = load_records(&args.corpus, args.limit)?;
    let m = resolve_m(args.m, &args.corpus, args.dataset.as_deref(), records.len())?;
    let cfg = &ck.model.config;
    let provider = make_provider(&args.embed, &args.corpus, cfg.embed_dim, cfg.hash_seed)?;
    let lines = run_inference(&ck, &provider, &records, m, args.seed)?;
    let mut file = args.out.as_deref().map(create).transpose()?;
    let out_name = args.out.as_deref().unwrap_or(Path::new("<stdout>"));
    let sink: &mut dyn Write = match file.as_mut() {
        Some(f) => f,
        None => stdout,
    };
    for l in &lines {
        write_json_line(sink, l).map_err(|e| io_err(out_name, e))?;
    }
    sink.flush().map_err(|e| io_err(out_name, e))?;
    Ok(lines)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    pub m: usize,
    pub seed: u64,
    /// Digest of the checkpoint configuration, when a checkpoint was used.
    pub config_digest: Option<String>,
    /// System name → corpus ROUGE.
    pub systems: BTreeMap<String, RougeTriple>,
}

fn digest(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write) -> CliResult<EvalReport> {
    let mut systems: Vec<String> = args.systems.iter().map(|s| s.trim().to_ascii_lowercase()).collect();
    systems.dedup();
    if let Some(bad) = systems
        .iter()
        .find(|s| !["diffusum", "lead", "oracle"].contains(&s.as_str()))
    {
        return Err(usage(format!(
            "unknown system {bad:?} (expected diffusum, lead, oracle)"
        )));
    }
    let records = load_records(&args.corpus, args.limit)?;
    let m = resolve_m(args.m, &args.corpus, args.dataset.as_deref(), records.len())?;
    let mut report = EvalReport {
        records: records.len(),
        m,
        seed: args.seed,
        config_digest: None,
        systems: BTreeMap::new(),
    };
    for system in &systems {
        let (name, selections) = match system.as_str() {
            "diffusum" => {
                let path = args
                    .checkpoint
                    .as_deref()
                    .ok_or_else(|| usage("the diffusum system needs --checkpoint"))?;
                let ck = Checkpoint::load(path)?;
                let cfg = &ck.model.config;
                report.config_digest = Some(digest(&cfg.to_toml_string()));
                let provider = make_provider(&args.embed, &args.corpus, cfg.embed_dim, cfg.hash_seed)?;
                let lines = run_inference(&ck, &provider, &records, m, args.seed)?;
                ("DiffuSum", lines.into_iter().map(|l| l.indices).collect::<Vec<_>>())
            }
            "lead" => (
                "LEAD",
                records
                    .iter()
                    .map(|r| lead_baseline(r.n(), m))
                    .collect::<diffusum::Result<Vec<_>>>()?,
            ),
            _ => {
                let labels = match &args.labels {
                    Some(p) => labels_for(&records, p)?,
                    None => records.iter().map(|r| greedy_oracle(r, m)).collect(),
                };
                (
                    "ORACLE",
                    labels
                        .iter()
                        .map(|l| oracle_baseline(Some(l)))
                        .collect::<diffusum::Result<Vec<_>>>()?,
                )
            }
        };
        let metrics = selection_triple(&records, &selections)?;
        report.systems.insert(name.to_owned(), metrics);
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    writeln!(stdout, "{text}").map_err(|e| io_err(Path::new("<stdout>"), e))?;
    if let Some(p) = &args.out {
        std::fs::write(p, format!("{text}\n")).map_err(|e| io_err(p, e))?;
    }
    Ok(report)
}

/// One exported representation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRow {
    pub id: String,
    /// `doc`, `oracle` or `generated`.
    pub role: String,
    pub slot: usize,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseSummary {
    pub records: usize,
    pub rows: usize,
    /// Mean cosine between generated rows and their encoded ORACLE rows.
    pub mean_cosine: f64,
}

pub fn cmd_diagnose(args: &DiagnoseArgs, stdout: &mut dyn Write) -> CliResult<DiagnoseSummary> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let records = load_records(&args.corpus, Some(args.limit))?;
    let cfg = &ck.model.config;
    let provider = make_provider(&args.embed, &args.corpus, cfg.embed_dim, cfg.hash_seed)?;
    let labels = match &args.labels {
        Some(p) => labels_for(&records, p)?,
        None => {
            let cap = args
                .m
                .or(DatasetManifest::describe(&args.corpus, args.dataset.as_deref(), records.len()).extract_count);
            records
                .iter()
                .map(|r| greedy_oracle(r, cap.unwrap_or(r.summary_sentences.len())))
                .collect()
        }
    };
    let mut out = create(&args.out)?;
    let mut rows = 0;
    let mut cosine_sum = 0.0;
    for (i, (r, l)) in records.iter().zip(&labels).enumerate() {
        let export = export_representations(&ck.model, &provider, r, l, record_seed(args.seed, i))?;
        cosine_sum += export.mean_cosine;
        for (role, vectors) in [
            ("doc", export.doc),
            ("oracle", export.oracle),
            ("generated", export.generated),
        ] {
            for (slot, vector) in vectors.into_iter().enumerate() {
                let row = ExportRow {
                    id: r.id.clone(),
                    role: role.to_owned(),
                    slot,
                    vector,
                };
                write_json_line(&mut out, &row).map_err(|e| io_err(&args.out, e))?;
                rows += 1;
            }
        }
    }
    out.flush().map_err(|e| io_err(&args.out, e))?;
    let summary = DiagnoseSummary {
        records: records.len(),
        rows,
        mean_cosine: cosine_sum / records.len() as f64,
    };
    write_json_line(stdout, &summary).map_err(|e| io_err(Path::new("<stdout>"), e))?;
    Ok(summary)
}
