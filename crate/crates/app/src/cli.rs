//! Command-line front end. Results go to stdout as JSON, logs to stderr.
//! Exit codes: 0 success, 1 invalid input or configuration, 2 backend
//! failure.

use std::io::{Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use spelunker_core::index::{save_index, DEFAULT_LEAF_SIZE};
use spelunker_core::preprocess::{build_processed_dataset_with, BuildOptions};
use spelunker_core::{load_csv, validate_schema, BallTree, DatasetSchema};
use spelunker_llm::{BackendError, HttpEmbedderConfig};

use crate::config::{ConfigError, EmbedderConfig, LlmConfig, RerankConfig, ServiceConfig};
use crate::evaluation::{evaluate_extraction, evaluate_retrieval, load_truth, EvalRunError};
use crate::pipeline::{Engine, EngineError, QueryResponse, ServiceError};
use crate::server::{self, AppState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "spelunker", version, about = "Exact hybrid k-NN search over wine reviews, driven by natural language")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index file from a CSV and a schema.
    Index(IndexArgs),
    /// Structured search without the LLM.
    Search(SearchArgs),
    /// Natural-language search through the LLM.
    Ask(AskArgs),
    /// Evaluation runs.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    Local,
    Http,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "local")]
    pub embedder: EmbedderKind,
    #[arg(long, default_value_t = spelunker_core::LocalEmbedder::DEFAULT_DIM)]
    pub embed_dim: usize,
    /// Base URL of the embedding service (with `--embedder http`).
    #[arg(long)]
    pub embed_url: Option<String>,
    #[arg(long, default_value_t = DEFAULT_LEAF_SIZE)]
    pub leaf_size: usize,
    /// Cut categorical texts to this many characters before embedding.
    #[arg(long)]
    pub max_text_chars: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Structured query as JSON, or `-` to read it from stdin.
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub weights: Option<String>,
    /// Leave out wall-clock timings so output is reproducible.
    #[arg(long)]
    pub omit_timings: bool,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub text: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub rerank: bool,
    /// LLM backend config (JSON); defaults to a local HTTP endpoint.
    #[arg(long)]
    pub llm_config: Option<PathBuf>,
    #[arg(long)]
    pub omit_timings: bool,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Score attribute extraction against structured truth.
    Extraction(ExtractionArgs),
    /// Precision/recall curves, optionally against re-ranked results.
    Retrieval(RetrievalArgs),
}

#[derive(Debug, Args)]
pub struct ExtractionArgs {
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long)]
    pub llm_config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Schema to validate against; defaults to the wine layout.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrievalArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub kmax: usize,
    #[arg(long)]
    pub rerank: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Needed for re-ranking and for cases without a structured query.
    #[arg(long)]
    pub llm_config: Option<PathBuf>,
    /// Also write the curves as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let code = match &e {
            ConfigError::Backend(BackendError::MissingApiKey(_)) => EXIT_BACKEND,
            _ => EXIT_INVALID,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => c.into(),
            other => CliError::invalid(other.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        CliError {
            code: if e.is_backend() { EXIT_BACKEND } else { EXIT_INVALID },
            message: e.to_string(),
        }
    }
}

impl From<EvalRunError> for CliError {
    fn from(e: EvalRunError) -> Self {
        CliError {
            code: if e.is_backend() { EXIT_BACKEND } else { EXIT_INVALID },
            message: e.to_string(),
        }
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::invalid(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::invalid(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))
}

fn parse_json_arg(raw: &str, what: &str) -> Result<Value, CliError> {
    serde_json::from_str(raw).map_err(|e| CliError::invalid(format!("{what} is not valid JSON: {e}")))
}

fn respond(out: &mut dyn Write, mut resp: QueryResponse, omit_timings: bool) -> Result<(), CliError> {
    if omit_timings {
        resp.timings = None;
    }
    print_json(out, &resp)
}

fn run_index(args: IndexArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let schema = DatasetSchema::from_json_file(&args.schema)
        .and_then(validate_schema)
        .map_err(|e| CliError::invalid(e.to_string()))?;
    let records = load_csv(&args.data, &schema).map_err(|e| CliError::invalid(e.to_string()))?;
    let embedder = match args.embedder {
        EmbedderKind::Local => EmbedderConfig::Local { dim: args.embed_dim },
        EmbedderKind::Http => EmbedderConfig::Http(HttpEmbedderConfig {
            base_url: args
                .embed_url
                .clone()
                .ok_or_else(|| CliError::invalid("--embedder http needs --embed-url"))?,
            dimension: args.embed_dim,
            timeout_secs: 30.0,
        }),
    };
    let provider = embedder.build()?;
    let opts = BuildOptions {
        max_text_chars: args.max_text_chars,
    };
    let dataset = build_processed_dataset_with::<f64>(records, &schema, provider.as_ref(), &opts).map_err(|e| {
        let backend = matches!(e, spelunker_core::PreprocessError::Embedding(spelunker_core::EmbedError::Provider(_)));
        CliError {
            code: if backend { EXIT_BACKEND } else { EXIT_INVALID },
            message: e.to_string(),
        }
    })?;
    let n = dataset.len();
    let tree = BallTree::build(dataset, args.leaf_size).map_err(|e| CliError::invalid(e.to_string()))?;
    save_index(&tree, &embedder.to_metadata(), &args.out).map_err(|e| CliError::invalid(e.to_string()))?;
    log::info!("indexed {n} records into {} ({} nodes)", args.out.display(), tree.nodes().len());
    print_json(out, &json!({ "records": n }))
}

fn run_search(args: SearchArgs, out: &mut dyn Write, stdin: &mut dyn Read) -> Result<(), CliError> {
    let raw = if args.query == "-" {
        let mut s = String::new();
        stdin
            .read_to_string(&mut s)
            .map_err(|e| CliError::invalid(format!("cannot read stdin: {e}")))?;
        s
    } else {
        args.query.clone()
    };
    let query = parse_json_arg(&raw, "--query")?;
    let weights = args.weights.as_deref().map(|w| parse_json_arg(w, "--weights")).transpose()?;
    let engine = Engine::open(&args.index, None)?;
    let resp = engine.search(&query, weights.as_ref(), args.k)?;
    respond(out, resp, args.omit_timings)
}

fn llm_config(path: Option<&Path>) -> Result<LlmConfig, CliError> {
    let cfg = match path {
        Some(p) => LlmConfig::from_file(p)?,
        None => LlmConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run_ask(args: AskArgs, out: &mut dyn Write) -> Result<(), CliError> {
    crate::pipeline::check_k(args.k)?;
    let backend = llm_config(args.llm_config.as_deref())?.build()?;
    let engine = Engine::open(&args.index, None)?;
    let rerank = RerankConfig::default();
    let resp = engine.ask(&args.text, args.k, backend.as_ref(), args.rerank.then_some(&rerank))?;
    respond(out, resp, args.omit_timings)
}

fn run_eval(cmd: EvalCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        EvalCommand::Extraction(args) => {
            let schema = match &args.schema {
                Some(p) => DatasetSchema::from_json_file(p)
                    .and_then(validate_schema)
                    .map_err(|e| CliError::invalid(e.to_string()))?,
                None => DatasetSchema::wine(),
            };
            let cases = load_truth(&args.cases)?;
            let backend = llm_config(Some(&args.llm_config))?.build()?;
            let report = evaluate_extraction(&schema, &cases, backend.as_ref())?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::invalid(e.to_string()))?;
            write_file(&args.out, &format!("{text}\n"))?;
            print_json(out, &report)
        }
        EvalCommand::Retrieval(args) => {
            let cases = load_truth(&args.truth)?;
            let engine = Engine::open(&args.index, None)?;
            let needs_backend = args.rerank || cases.iter().any(|c| c.structured.as_ref().is_none_or(Value::is_null));
            let backend = if needs_backend || args.llm_config.is_some() {
                Some(llm_config(args.llm_config.as_deref())?.build()?)
            } else {
                None
            };
            let rerank = RerankConfig::default();
            let report = evaluate_retrieval(
                &engine,
                &cases,
                args.kmax,
                backend.as_deref(),
                args.rerank.then_some(&rerank),
            )?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::invalid(e.to_string()))?;
            write_file(&args.out, &format!("{text}\n"))?;
            if let Some(csv) = &args.csv {
                write_file(csv, &report.curves_csv())?;
            }
            print_json(out, &report)
        }
    }
}

fn run_serve(args: ServeArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(p) => ServiceConfig::from_file(p)?,
        None => ServiceConfig::default(),
    };
    if let Some(index) = args.index {
        config.index = Some(index);
    }
    if let Some(port) = args.port {
        config.port = port;
    }
    config.validate()?;
    let index = config
        .index
        .clone()
        .ok_or_else(|| CliError::invalid("no index given (--index or `index` in the config)"))?;
    let engine = Engine::open(&index, config.embedder.as_ref())?;
    let backend = config.llm.build()?;
    let state = Arc::new(AppState {
        engine,
        backend,
        rerank: config.rerank.clone(),
    });
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::invalid(e.to_string()))?;
    let result = runtime.block_on(server::serve(state.clone(), addr, &config.cors_origins));
    // blocking HTTP clients inside the state must be dropped outside the runtime
    drop(runtime);
    drop(state);
    result.map_err(|e| CliError::invalid(format!("server error: {e}")))
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, stdin: &mut dyn Read) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Index(a) => run_index(a, out),
        Command::Search(a) => run_search(a, out, stdin),
        Command::Ask(a) => run_ask(a, out),
        Command::Eval(c) => run_eval(c, out),
        Command::Serve(a) => run_serve(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            let _ = print_json(out, &json!({ "error": e.message, "exit_code": e.code }));
            e.code
        }
    }
}
