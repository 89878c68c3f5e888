//! Command-line front end.
//!
//! Every subcommand reads one TOML configuration file. Relative paths in it
//! resolve against the file's directory, and `${NAME}` is replaced by the
//! environment variable `NAME` before parsing. API keys are never taken from
//! the command line: the config names the variable to read them from.
//!
//! Exit codes: 0 success, 1 repair did not pass, 2 input error, 3 backend
//! unavailable, 4 unparseable LLM reply.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use regex::Regex;
use serde::Deserialize;

use crate::corpus::{
    chunk_corpus, filter_troubleshooting, load_manual_corpus, load_qa_records, read_chunks, valid_commands,
    write_chunks, ChunkingPolicy, SourceKind, DEFAULT_CHUNK_SIZE, DEFAULT_MIN_SCORE,
};
use crate::evalharness::{
    ablation_table, confusion_matrix, correctness_mismatches, delta_table, load_annotations, load_dataset, load_records,
    render_correctness, render_report, run_experiment, sample_cases, weighted_kappa, write_records, AnnotationSet,
    CorrectnessLabel, DatasetOptions, EvalError, ExperimentSettings, KappaWeights, ReportFormat,
    DEFAULT_HIGHLIGHT_THRESHOLD,
};
use crate::executor::{Executor, ExecutorMode, LiveConfig, ReplayFixture, SafetyPolicy, DEFAULT_TOOL};
use crate::repair::{
    repair_loop, AttemptOutcome, HttpLlmClient, HttpLlmConfig, LlmClient, PromptPair,
    RepairCondition, RepairSettings, ScriptedLlm, FailingCall,
};
use crate::retrieval::{
    build_index, Bm25Params, DistanceMetric, Embedder, HashEmbedder, HttpEmbedder, IndexSnapshot, LexicalIndex,
    RetrievalError, Retriever, VectorRetriever,
};

#[derive(Debug)]
pub enum CliError {
    Failed(String),
    Input(String),
    Unavailable(String),
    Parse(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Input(_) => 2,
            CliError::Unavailable(_) => 3,
            CliError::Parse(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Failed(m) | CliError::Input(m) | CliError::Unavailable(m) | CliError::Parse(m) => {
                f.write_str(m)
            }
        }
    }
}

impl std::error::Error for CliError {}

fn input(e: impl fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Unavailable(_) => CliError::Unavailable(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::MissingIndex(_) => CliError::Unavailable(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Arguments

#[derive(Debug, Parser)]
#[command(name = "rag-repair", version, about = "Retrieval-augmented repair of failing kubectl calls")]
pub struct Cli {
    #[arg(long, global = true, default_value = "rag-repair.toml")]
    pub config: PathBuf,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Allow the live executor to launch processes.
    #[arg(long, global = true)]
    pub unsafe_live_exec: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, filter and chunk both document collections.
    Ingest,
    /// Build the retrieval index from the chunk export.
    Index,
    /// Repair one failing call.
    Repair(RepairArgs),
    /// Run the ablation experiment over a dataset.
    Eval(EvalArgs),
    /// Agreement between two annotators.
    Kappa(KappaArgs),
    /// Tables from saved experiment records.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    #[arg(long)]
    pub query: String,
    #[arg(long = "cmd")]
    pub command: String,
    #[arg(long)]
    pub error: String,
    #[arg(long)]
    pub condition: Option<RepairCondition>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated; defaults to all four.
    #[arg(long, value_delimiter = ',')]
    pub conditions: Vec<RepairCondition>,
    #[arg(long)]
    pub output: PathBuf,
    /// Evaluate a seeded random subset of this many cases.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Keep cases whose error text would normally be excluded.
    #[arg(long)]
    pub keep_excluded: bool,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    pub annotations_a: PathBuf,
    pub annotations_b: PathBuf,
    #[arg(long)]
    pub weights: Option<KappaWeights>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, default_value = "markdown")]
    pub format: ReportFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub corpus: CorpusConfig,
    pub index: IndexConfig,
    pub embedding: EmbeddingConfig,
    pub llm: LlmConfig,
    pub executor: ExecutorConfig,
    pub repair: RepairConfig,
    pub kappa: KappaConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub manual_dir: Option<PathBuf>,
    pub troubleshooting: Option<PathBuf>,
    pub min_score: i64,
    pub chunk_size: usize,
    pub overlap: usize,
    pub chunks: PathBuf,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            manual_dir: None,
            troubleshooting: None,
            min_score: DEFAULT_MIN_SCORE,
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: 0,
            chunks: PathBuf::from("chunks.jsonl"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexConfig {
    /// `vector` or `bm25`.
    pub backend: String,
    pub metric: String,
    pub snapshot: PathBuf,
    pub k1: f64,
    pub b: f64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            backend: "vector".into(),
            metric: "l2squared".into(),
            snapshot: PathBuf::from("index.json"),
            k1: 1.2,
            b: 0.75,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    /// `stub` (local feature hashing) or `http`.
    pub provider: String,
    pub dims: usize,
    pub url: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: "stub".into(),
            dims: 256,
            url: None,
            api_key_env: None,
            timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    /// `scripted` (rules file) or `http`.
    pub provider: String,
    pub script: Option<PathBuf>,
    pub url: Option<String>,
    pub model: String,
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            provider: "scripted".into(),
            script: None,
            url: None,
            model: "scripted".into(),
            api_key_env: None,
            temperature: 0.0,
            max_tokens: 512,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutorConfig {
    /// `replay`, `deny` or `live`.
    pub mode: String,
    pub fixture: Option<PathBuf>,
    pub binary: PathBuf,
    pub kubeconfig: Option<PathBuf>,
    pub timeout_secs: u64,
    pub parallelism: usize,
    pub allow_mutating: bool,
    /// Must be set for `live`, in addition to `--unsafe-live-exec`.
    pub unsafe_live_ack: bool,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            mode: "deny".into(),
            fixture: None,
            binary: PathBuf::from(DEFAULT_TOOL),
            kubeconfig: None,
            timeout_secs: 30,
            parallelism: 1,
            allow_mutating: false,
            unsafe_live_ack: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepairConfig {
    pub condition: String,
    pub k_per_collection: usize,
    pub max_attempts: usize,
    pub tool_name: String,
    /// `original` or `corrected`.
    pub prompts: String,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            condition: "full".into(),
            k_per_collection: 1,
            max_attempts: 1,
            tool_name: DEFAULT_TOOL.into(),
            prompts: "original".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KappaConfig {
    pub weights: String,
}

impl Default for KappaConfig {
    fn default() -> Self {
        KappaConfig { weights: "linear".into() }
    }
}

/// Replaces every `${NAME}` with the value of environment variable `NAME`.
pub fn interpolate_env(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, String> {
    let re = Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap();
    let mut missing = None;
    let out = re.replace_all(text, |caps: &regex::Captures| {
        lookup(&caps[1]).unwrap_or_else(|| {
            missing.get_or_insert_with(|| caps[1].to_string());
            String::new()
        })
    });
    match missing {
        Some(name) => Err(format!("environment variable {name} is not set")),
        None => Ok(out.into_owned()),
    }
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

fn must_exist(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{what} {} does not exist", path.display())))
    }
}

impl Config {
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let text = interpolate_env(text, |name| std::env::var(name).ok()).map_err(CliError::Input)?;
        let mut config: Config = toml::from_str(&text).map_err(|e| CliError::Input(format!("config: {e}")))?;
        let c = &mut config;
        for p in [&mut c.corpus.manual_dir, &mut c.corpus.troubleshooting, &mut c.llm.script, &mut c.executor.fixture, &mut c.executor.kubeconfig]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        resolve(base, &mut c.corpus.chunks);
        resolve(base, &mut c.index.snapshot);
        if let Some(p) = &c.corpus.manual_dir {
            must_exist(p, "manual directory")?;
        }
        if let Some(p) = &c.corpus.troubleshooting {
            must_exist(p, "troubleshooting file")?;
        }
        if let Some(p) = &c.llm.script {
            must_exist(p, "LLM script")?;
        }
        if let Some(p) = &c.executor.fixture {
            must_exist(p, "replay fixture")?;
        }
        if c.executor.mode == "live" && !c.executor.unsafe_live_ack {
            return Err(input("live executor requires executor.unsafe_live_ack = true"));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn api_key(var: &Option<String>) -> Option<String> {
        var.as_ref().and_then(|name| std::env::var(name).ok())
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>, CliError> {
        let e = &self.embedding;
        match e.provider.as_str() {
            "stub" => Ok(Box::new(HashEmbedder::new(e.dims))),
            "http" => {
                let url = e.url.clone().ok_or_else(|| input("embedding.url is required for the http provider"))?;
                Ok(Box::new(HttpEmbedder::new(url, Self::api_key(&e.api_key_env), e.dims, Duration::from_secs(e.timeout_secs))?))
            }
            other => Err(CliError::Input(format!("unknown embedding provider {other:?}"))),
        }
    }

    pub fn llm(&self) -> Result<Box<dyn LlmClient>, CliError> {
        let l = &self.llm;
        match l.provider.as_str() {
            "scripted" => {
                let script = l.script.as_ref().ok_or_else(|| input("llm.script is required for the scripted provider"))?;
                Ok(Box::new(ScriptedLlm::load_rules(l.model.clone(), script).map_err(input)?))
            }
            "http" => {
                let url = l.url.clone().ok_or_else(|| input("llm.url is required for the http provider"))?;
                let client = HttpLlmClient::new(HttpLlmConfig {
                    url,
                    model: l.model.clone(),
                    api_key: Self::api_key(&l.api_key_env),
                    temperature: l.temperature,
                    max_tokens: l.max_tokens,
                    timeout: Duration::from_secs(l.timeout_secs),
                })
                .map_err(input)?;
                Ok(Box::new(client))
            }
            other => Err(CliError::Input(format!("unknown LLM provider {other:?}"))),
        }
    }

    pub fn executor(&self, unsafe_live_exec: bool) -> Result<Executor, CliError> {
        let x = &self.executor;
        let policy = SafetyPolicy {
            tool_name: self.repair.tool_name.clone(),
            live_enabled: false,
            allow_mutating: x.allow_mutating,
        };
        let mode = match x.mode.as_str() {
            "deny" => ExecutorMode::Deny,
            "replay" => {
                let path = x.fixture.as_ref().ok_or_else(|| input("executor.fixture is required for replay"))?;
                ExecutorMode::Replay(ReplayFixture::load(path).map_err(input)?)
            }
            "live" => {
                if !unsafe_live_exec {
                    return Err(input("live execution needs --unsafe-live-exec"));
                }
                let live = LiveConfig {
                    binary: x.binary.clone(),
                    kubeconfig: x.kubeconfig.clone(),
                    timeout: Duration::from_secs(x.timeout_secs),
                    parallelism: x.parallelism,
                };
                return Ok(Executor::new(ExecutorMode::Live(live), SafetyPolicy { live_enabled: true, ..policy }));
            }
            other => return Err(CliError::Input(format!("unknown executor mode {other:?}"))),
        };
        Ok(Executor::new(mode, policy))
    }

    pub fn repair_settings(&self) -> Result<RepairSettings, CliError> {
        let r = &self.repair;
        let prompts = match r.prompts.as_str() {
            "original" => PromptPair::original(),
            "corrected" => PromptPair::corrected(),
            other => return Err(CliError::Input(format!("unknown prompt set {other:?}"))),
        };
        Ok(RepairSettings {
            condition: r.condition.parse().map_err(CliError::Input)?,
            k_per_collection: r.k_per_collection,
            max_attempts: r.max_attempts,
            tool_name: r.tool_name.clone(),
            prompts,
        })
    }

    pub fn chunking(&self) -> Result<ChunkingPolicy, CliError> {
        ChunkingPolicy::new(self.corpus.chunk_size, self.corpus.overlap).map_err(input)
    }

    pub fn kappa_weights(&self) -> Result<KappaWeights, CliError> {
        self.kappa.weights.parse().map_err(CliError::Input)
    }
}

// ---------------------------------------------------------------------------
// Subcommands

/// A loaded snapshot plus whatever it needs to answer queries.
pub enum LoadedIndex {
    Vector { snapshot: IndexSnapshot, embedder: Box<dyn Embedder> },
    Lexical(LexicalIndex),
}

impl LoadedIndex {
    pub fn load(config: &Config) -> Result<Self, CliError> {
        let path = &config.index.snapshot;
        if !path.exists() {
            return Err(CliError::Unavailable(format!("index snapshot {} not found; run `index` first", path.display())));
        }
        match IndexSnapshot::load(path).map_err(input)? {
            IndexSnapshot::Lexical(index) => Ok(LoadedIndex::Lexical(index)),
            snapshot @ IndexSnapshot::Vector(_) => {
                let embedder = config.embedder()?;
                if let IndexSnapshot::Vector(index) = &snapshot {
                    if index.dims() != embedder.dims() {
                        return Err(CliError::Input(format!(
                            "snapshot has {} dims but the embedder produces {}",
                            index.dims(),
                            embedder.dims()
                        )));
                    }
                }
                Ok(LoadedIndex::Vector { snapshot, embedder })
            }
        }
    }

    pub fn retriever(&self) -> Box<dyn Retriever + '_> {
        match self {
            LoadedIndex::Vector { snapshot: IndexSnapshot::Vector(index), embedder } => {
                Box::new(VectorRetriever { index, embedder: embedder.as_ref() })
            }
            LoadedIndex::Vector { snapshot: IndexSnapshot::Lexical(index), .. } | LoadedIndex::Lexical(index) => {
                Box::new(index.clone())
            }
        }
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(input),
        _ => Ok(()),
    }
}

fn cmd_ingest(config: &Config) -> Result<(), CliError> {
    let manual_dir = config.corpus.manual_dir.as_ref().ok_or_else(|| input("corpus.manual_dir is not set"))?;
    let ts_path = config.corpus.troubleshooting.as_ref().ok_or_else(|| input("corpus.troubleshooting is not set"))?;
    let policy = config.chunking()?;

    let manual = load_manual_corpus(manual_dir).map_err(input)?;
    for failure in &manual.failures {
        eprintln!("failed to ingest {}: {}", failure.path.display(), failure.error);
    }
    if manual.documents.is_empty() {
        return Err(CliError::Input(format!("no manual page in {} could be ingested", manual_dir.display())));
    }
    let records = load_qa_records(ts_path).map_err(input)?;
    let troubleshooting = filter_troubleshooting(&records, config.corpus.min_score, &valid_commands(&manual.documents));

    let manual_chunks = chunk_corpus(&manual.documents, &policy).map_err(input)?;
    let ts_chunks = chunk_corpus(&troubleshooting, &policy).map_err(input)?;
    println!("Manual: {} docs, {} chunks", manual.documents.len(), manual_chunks.len());
    println!("Troubleshooting: {} docs, {} chunks", troubleshooting.len(), ts_chunks.len());

    let mut chunks = manual_chunks;
    chunks.extend(ts_chunks);
    ensure_parent(&config.corpus.chunks)?;
    write_chunks(&config.corpus.chunks, &chunks).map_err(input)?;
    println!("wrote {}", config.corpus.chunks.display());
    Ok(())
}

fn cmd_index(config: &Config) -> Result<(), CliError> {
    let path = &config.corpus.chunks;
    must_exist(path, "chunk export")?;
    let chunks = read_chunks(path).map_err(input)?;
    if chunks.is_empty() {
        return Err(CliError::Input(format!("chunk export {} is empty", path.display())));
    }
    let snapshot = match config.index.backend.as_str() {
        "vector" => {
            let metric: DistanceMetric = config.index.metric.parse().map_err(CliError::Input)?;
            let embedder = config.embedder()?;
            let index = build_index(&chunks, embedder.as_ref(), metric)?;
            println!("backend: vector");
            println!("dims: {}", index.dims());
            println!("metric: {}", index.metric());
            IndexSnapshot::Vector(index)
        }
        "bm25" => {
            let params = Bm25Params::new(config.index.k1, config.index.b)?;
            println!("backend: lexical (bm25, k1 {}, b {})", params.k1, params.b);
            IndexSnapshot::Lexical(LexicalIndex::new(chunks, params)?)
        }
        other => return Err(CliError::Input(format!("unknown index backend {other:?}"))),
    };
    println!("entries: {}", snapshot.len());
    ensure_parent(&config.index.snapshot)?;
    snapshot.save(&config.index.snapshot).map_err(input)?;
    println!("wrote {}", config.index.snapshot.display());
    Ok(())
}

fn cmd_repair(config: &Config, args: &RepairArgs, unsafe_live_exec: bool) -> Result<(), CliError> {
    let mut settings = config.repair_settings()?;
    if let Some(c) = args.condition {
        settings.condition = c;
    }
    let failing = FailingCall::new(args.query.clone(), args.command.clone(), args.error.clone()).map_err(input)?;
    let executor = config.executor(unsafe_live_exec)?;
    let llm = config.llm()?;
    let loaded = if settings.condition.needs_index() { Some(LoadedIndex::load(config)?) } else { None };
    let retriever = loaded.as_ref().map(LoadedIndex::retriever);

    let run = repair_loop(&failing, llm.as_ref(), &executor, retriever.as_deref(), &settings).map_err(|e| match e {
        crate::repair::RepairError::Retrieval(r) => CliError::from(r),
        other => input(other),
    })?;

    if settings.condition.needs_index() {
        println!("Evidence:");
        for (kind, evidence) in [
            (SourceKind::Manual, &run.context.manual_evidence),
            (SourceKind::Troubleshooting, &run.context.troubleshooting_evidence),
        ] {
            for sc in evidence {
                println!("  [{}] {}#{} score {:.6}", kind.label(), sc.chunk.doc_id, sc.chunk.ordinal, sc.score);
            }
        }
    }
    let last = run.attempts.last().expect("at least one attempt");
    for attempt in &run.attempts {
        if let AttemptOutcome::Repaired(o) = &attempt.outcome {
            println!("Attempt {}: {} (return code {})", attempt.attempt, o.repaired_command, attempt.execution.return_code);
        }
    }
    match &last.outcome {
        AttemptOutcome::Repaired(outcome) => {
            println!("Repaired command: {}", outcome.repaired_command);
            if !outcome.reasoning.is_empty() {
                println!("Reasoning:\n{}", outcome.reasoning);
            }
            if matches!(executor.mode(), ExecutorMode::Deny) {
                println!("not executed (executor mode deny)");
                return Ok(());
            }
            if !last.execution.stdout.is_empty() {
                println!("Output:\n{}", last.execution.stdout.trim_end());
            }
            if run.passed() {
                Ok(())
            } else {
                Err(CliError::Failed(format!(
                    "repaired command failed with return code {}: {}",
                    last.execution.return_code,
                    last.execution.stderr.trim()
                )))
            }
        }
        AttemptOutcome::Unparsed { message, .. } => Err(CliError::Parse(message.clone())),
        AttemptOutcome::LlmFailed { message } | AttemptOutcome::Aborted { message } => {
            Err(CliError::Unavailable(message.clone()))
        }
    }
}

fn cmd_eval(config: &Config, args: &EvalArgs, cli: &Cli) -> Result<(), CliError> {
    let dataset = load_dataset(&args.dataset, DatasetOptions { keep_excluded: args.keep_excluded })?;
    if dataset.excluded > 0 {
        println!("excluded {} records with \"not found\" errors", dataset.excluded);
    }
    if dataset.is_empty() {
        return Err(CliError::Input(format!("dataset {} has no cases", args.dataset.display())));
    }
    let cases = match args.sample {
        Some(n) => sample_cases(&dataset.cases, n, cli.seed),
        None => dataset.cases,
    };
    let conditions = if args.conditions.is_empty() { RepairCondition::ALL.to_vec() } else { args.conditions.clone() };
    let needs_index = conditions.iter().any(|c| c.needs_index());
    let loaded = if needs_index { Some(LoadedIndex::load(config)?) } else { None };
    let retriever = loaded.as_ref().map(LoadedIndex::retriever);
    let executor = config.executor(cli.unsafe_live_exec)?;
    let llm = config.llm()?;

    fs::create_dir_all(&args.output).map_err(input)?;
    let settings = ExperimentSettings {
        conditions,
        repair: config.repair_settings()?,
        jobs: cli.jobs,
        transcript: Some(args.output.join("transcript.jsonl")),
    };
    let experiment = run_experiment(&cases, llm.as_ref(), &executor, retriever.as_deref(), &settings)?;
    write_records(&args.output.join("records.jsonl"), &experiment.records)?;

    let table = ablation_table(&experiment.records, DEFAULT_HIGHLIGHT_THRESHOLD)?;
    let csv = render_report(std::slice::from_ref(&table), ReportFormat::Csv);
    let md = render_report(std::slice::from_ref(&table), ReportFormat::Markdown);
    fs::write(args.output.join("report.csv"), &csv).map_err(input)?;
    fs::write(args.output.join("report.md"), &md).map_err(input)?;
    println!("{} cases, {} records", cases.len(), experiment.records.len());
    print!("{md}");
    Ok(())
}

fn single_annotator(path: &Path) -> Result<AnnotationSet, CliError> {
    let mut sets = load_annotations(path)?;
    match sets.len() {
        1 => Ok(sets.remove(0)),
        0 => Err(CliError::Input(format!("{} has no annotations", path.display()))),
        n => Err(CliError::Input(format!("{} holds {n} annotators; expected one per file", path.display()))),
    }
}

fn cmd_kappa(config: &Config, args: &KappaArgs) -> Result<(), CliError> {
    let a = single_annotator(&args.annotations_a)?;
    let b = single_annotator(&args.annotations_b)?;
    let weights = match args.weights {
        Some(w) => w,
        None => config.kappa_weights()?,
    };
    let kappa = weighted_kappa(&a, &b, weights)?;
    let matrix = confusion_matrix(&a, &b)?;
    println!("annotators: {} vs {}", a.annotator_id, b.annotator_id);
    println!("cases: {}", a.labels.len());
    println!("weights: {weights:?}");
    println!("kappa: {kappa:.4}");
    let names: Vec<&str> = CorrectnessLabel::ALL.iter().map(|l| l.name()).collect();
    println!("{:>10} {}", "", names.iter().map(|n| format!("{n:>10}")).collect::<String>());
    for (label, row) in names.iter().zip(matrix) {
        println!("{label:>10} {}", row.iter().map(|c| format!("{c:>10}")).collect::<String>());
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let mut records = load_records(&args.records)?;
    if records.is_empty() {
        return Err(CliError::Input(format!("{} has no records", args.records.display())));
    }
    let mut tables = vec![ablation_table(&records, DEFAULT_HIGHLIGHT_THRESHOLD)?];
    let base: Vec<_> = records.iter().filter(|r| r.condition == RepairCondition::NoDocs).cloned().collect();
    let full: Vec<_> = records.iter().filter(|r| r.condition == RepairCondition::Full).cloned().collect();
    if !base.is_empty() && !full.is_empty() {
        tables.push(delta_table(&base, &full, DEFAULT_HIGHLIGHT_THRESHOLD)?);
    }
    let mut out = render_report(&tables, args.format);

    if let Some(path) = &args.annotations {
        let sets = load_annotations(path)?;
        let set = sets.first().ok_or_else(|| CliError::Input(format!("{} has no annotations", path.display())))?;
        let labels: BTreeMap<&str, CorrectnessLabel> = set.labels.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        set.validate_against(records.iter().map(|r| r.case_id.as_str()).collect::<Vec<_>>())?;
        for record in &mut records {
            record.correctness = labels.get(record.case_id.as_str()).copied();
        }
        let labeled: Vec<_> = records.into_iter().filter(|r| r.correctness.is_some()).collect();
        for condition in RepairCondition::ALL {
            let subset: Vec<_> = labeled.iter().filter(|r| r.condition == condition).cloned().collect();
            for case in correctness_mismatches(&subset) {
                log::warn!("case {case} under {condition}: correctness label disagrees with execution result");
            }
        }
        out.push('\n');
        out.push_str(&render_correctness(&labeled, args.format)?);
    }
    match &args.output {
        Some(path) => fs::write(path, out).map_err(input)?,
        None => print!("{out}"),
    }
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Command::Report(args) = &cli.command {
        return cmd_report(args);
    }
    let config = Config::load(&cli.config)?;
    match &cli.command {
        Command::Ingest => cmd_ingest(&config),
        Command::Index => cmd_index(&config),
        Command::Repair(args) => cmd_repair(&config, args, cli.unsafe_live_exec),
        Command::Eval(args) => cmd_eval(&config, args, cli),
        Command::Kappa(args) => cmd_kappa(&config, args),
        Command::Report(_) => unreachable!(),
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
