//! `atd`: ingest, synthesize, report on and serve multi-agent trace diagnoses.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid input (parse, validation,
//! usage, configuration), 3 duplicate case id, 4 unknown case, 5 bind failure.

mod config;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use atd_core::canonical::to_canonical_bytes;
use atd_core::ingest::{ingest, IngestError, IngestOptions};
use atd_core::layering::detect_signals;
use atd_core::store::{list_cases, load_case, StoreError};
use atd_core::summarize::{RemoteSummarizer, SummarizerMode};
use atd_core::synth::{generate, FailureManifest, InjectionSpec, SynthConfig};
use atd_core::trace::SourceFormat;
use atd_core::{Deterministic, SignalKind, Summarizer};
use atd_service::ServiceConfig;

use config::{CliConfig, FileConfig, Flags, CONFIG_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "atd",
    version,
    about = "Layered diagnosis of multi-agent execution traces"
)]
struct Cli {
    /// Case store directory [env: ATD_STORE]
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Config file (default: ./atd.toml when present)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Summarizer backend
    #[arg(long, global = true, value_parser = parse_mode)]
    summarizer: Option<SummarizerMode>,
    /// Consecutive no-progress operations that count as a stall [env: ATD_STALL_L]
    #[arg(long = "stall-l", global = true)]
    stall_l: Option<usize>,
    /// Op-type table (TOML, or JSON by extension) replacing the built-in one
    #[arg(long, global = true)]
    op_table: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, validate, analyze and store a trace
    Ingest {
        file: PathBuf,
        #[arg(long, default_value = "ctef", value_parser = parse_format)]
        format: SourceFormat,
        /// Defaults to the file name without extension, made id-safe
        #[arg(long)]
        case_id: Option<String>,
        /// Failure manifest to store alongside the case
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Generate a trace with known injected failures
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the fewest plans that fit the injections
        #[arg(long)]
        plans: Option<usize>,
        /// `<type>=<count>`; repeatable
        #[arg(long = "inject", value_parser = parse_injection)]
        injections: Vec<InjectionSpec>,
        /// Writes trace.jsonl and manifest.json here
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        query: Option<String>,
    },
    /// Write a Markdown report for a stored case
    Report {
        case_id: String,
        /// Defaults to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a stored case's diagnostic signals, one JSON object per line
    Signals { case_id: String },
    /// List stored cases, newest first
    List,
    /// Serve the HTTP API (and a static UI directory, if given)
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Browser origin allowed by CORS (`*` for any)
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

fn parse_mode(s: &str) -> Result<SummarizerMode, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<SourceFormat, String> {
    s.parse()
}

fn parse_injection(s: &str) -> Result<InjectionSpec, String> {
    s.parse()
        .map_err(|e: atd_core::synth::SynthError| e.to_string())
}

/// An error with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }

    fn other(message: impl Into<String>) -> Self {
        Self::new(1, message)
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::NotFound(_) => 4,
            StoreError::DuplicateCase(_) => 3,
            StoreError::InvalidCaseId(_) => 2,
            StoreError::IoFailure { .. } | StoreError::CorruptDocument { .. } => 1,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Store(s) => s.into(),
            IngestError::Invalid(v) => {
                let mut msg = format!("trace violates {} invariant(s):", v.len());
                for violation in &v {
                    msg.push_str(&format!("\n  {violation}"));
                }
                Failure::input(msg)
            }
            e if e.is_input_error() => Failure::input(e.to_string()),
            e => Failure::other(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<CliConfig, Failure> {
    let file = match &cli.config {
        Some(path) if !path.is_file() => {
            return Err(Failure::input(format!(
                "config file {} not found",
                path.display()
            )))
        }
        Some(path) => FileConfig::load(path),
        None => FileConfig::load(Path::new(CONFIG_FILE)),
    }
    .map_err(Failure::input)?;
    let flags = Flags {
        store: cli.store.clone(),
        summarizer: cli.summarizer,
        stall_threshold: cli.stall_l,
        op_table: cli.op_table.clone(),
    };
    CliConfig::resolve(&flags, |k| std::env::var(k).ok(), file).map_err(Failure::input)
}

fn summarizer(cfg: &CliConfig) -> Result<Arc<dyn Summarizer>, Failure> {
    let Some(remote) = &cfg.remote else {
        return Ok(Arc::new(Deterministic));
    };
    let mut s = RemoteSummarizer::new(remote.clone()).map_err(|e| Failure::other(e.to_string()))?;
    if let Some(dir) = &cfg.prompt_dir {
        s = s
            .with_prompt_dir(dir)
            .map_err(|e| Failure::input(format!("prompt directory {}: {e}", dir.display())))?;
    }
    Ok(Arc::new(s))
}

fn run(cli: Cli) -> CmdResult {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest {
            file,
            format,
            case_id,
            manifest,
        } => cmd_ingest(&cfg, &file, format, case_id, manifest.as_deref()),
        Command::Synth {
            seed,
            plans,
            injections,
            out,
            query,
        } => cmd_synth(&cfg, seed, plans, injections, &out, query),
        Command::Report { case_id, out } => cmd_report(&cfg, &case_id, out.as_deref()),
        Command::Signals { case_id } => cmd_signals(&cfg, &case_id),
        Command::List => cmd_list(&cfg),
        Command::Serve {
            port,
            host,
            static_dir,
            cors_origin,
        } => cmd_serve(&cfg, &host, port, static_dir, cors_origin),
    }
}

/// Derives a valid case id from a file name: lowercase, with every character
/// outside `[a-z0-9-]` replaced by `-`.
fn case_id_from_path(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    let id: String = stem
        .chars()
        .map(|c| {
            if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' {
                c
            } else {
                '-'
            }
        })
        .take(64)
        .collect();
    if id.is_empty() {
        "case".into()
    } else {
        id
    }
}

fn cmd_ingest(
    cfg: &CliConfig,
    file: &Path,
    format: SourceFormat,
    case_id: Option<String>,
    manifest: Option<&Path>,
) -> CmdResult {
    let bytes = std::fs::read(file)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", file.display())))?;
    let manifest: Option<FailureManifest> = match manifest {
        Some(path) => {
            let text = std::fs::read(path)
                .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
            Some(
                serde_json::from_slice(&text)
                    .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    let case_id = case_id.unwrap_or_else(|| case_id_from_path(file));
    let table = cfg.table().map_err(Failure::input)?;
    let summarizer = summarizer(cfg)?;
    ingest(
        &cfg.store_root,
        &case_id,
        format,
        &bytes,
        IngestOptions {
            summarizer: summarizer.as_ref(),
            table: &table,
            cache_summaries: cfg.summarizer_mode == SummarizerMode::Remote,
            manifest,
        },
    )?;
    let (_, docs) = load_case(&cfg.store_root, &case_id)?;
    let analysis = docs
        .analysis
        .ok_or_else(|| Failure::other("stored case has no analysis"))?;
    println!(
        "analyzed: {case_id} plans={} actions={}",
        analysis.plans.len(),
        analysis.action_count()
    );
    Ok(())
}

/// Fewest plans that can hold `pp` repeated-reason injections: each needs two
/// revisions of its own.
fn default_plans(injections: &[InjectionSpec]) -> usize {
    let pp: usize = injections
        .iter()
        .filter(|i| i.kind == SignalKind::ProblematicPlanning)
        .map(|i| i.count)
        .sum();
    (2 * pp + 1).max(1)
}

fn cmd_synth(
    cfg: &CliConfig,
    seed: u64,
    plans: Option<usize>,
    injections: Vec<InjectionSpec>,
    out: &Path,
    query: Option<String>,
) -> CmdResult {
    let mut config = SynthConfig {
        seed,
        n_plans: plans.unwrap_or_else(|| default_plans(&injections)),
        injections,
        stall_threshold: cfg.stall_threshold,
        ..Default::default()
    };
    if let Some(q) = query {
        config.query = q;
    }
    let synth = generate(&config).map_err(|e| Failure::input(e.to_string()))?;
    std::fs::create_dir_all(out)
        .map_err(|e| Failure::other(format!("cannot create {}: {e}", out.display())))?;
    let trace_path = out.join("trace.jsonl");
    let manifest_path = out.join("manifest.json");
    let write = |path: &Path, bytes: &[u8]| {
        std::fs::write(path, bytes)
            .map_err(|e| Failure::other(format!("cannot write {}: {e}", path.display())))
    };
    write(&trace_path, synth.trace.to_ctef().as_bytes())?;
    let manifest =
        to_canonical_bytes(&synth.manifest).map_err(|e| Failure::other(e.to_string()))?;
    write(&manifest_path, &manifest)?;
    println!(
        "synthesized: seed={seed} plans={} events={} injected={}",
        config.n_plans,
        synth.trace.events.len(),
        synth.manifest.entries.len()
    );
    println!("trace: {}", trace_path.display());
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn cmd_report(cfg: &CliConfig, case_id: &str, out: Option<&Path>) -> CmdResult {
    let (_, docs) = load_case(&cfg.store_root, case_id)?;
    let analysis = docs
        .analysis
        .ok_or_else(|| Failure::new(4, format!("case `{case_id}` has not been analyzed")))?;
    let table = cfg.table().map_err(Failure::input)?;
    let signals = detect_signals(
        &analysis,
        &docs.trace,
        &table.capabilities(),
        cfg.stall_threshold,
    )
    .map_err(|e| Failure::input(e.to_string()))?;
    let md = report::render(&analysis, &docs.trace, &signals);
    match out {
        Some(path) => {
            std::fs::write(path, md)
                .map_err(|e| Failure::other(format!("cannot write {}: {e}", path.display())))?;
            println!("report: {case_id} {}", path.display());
        }
        None => print!("{md}"),
    }
    Ok(())
}

fn cmd_signals(cfg: &CliConfig, case_id: &str) -> CmdResult {
    let (_, docs) = load_case(&cfg.store_root, case_id)?;
    let analysis = docs
        .analysis
        .ok_or_else(|| Failure::new(4, format!("case `{case_id}` has not been analyzed")))?;
    let table = cfg.table().map_err(Failure::input)?;
    let signals = detect_signals(
        &analysis,
        &docs.trace,
        &table.capabilities(),
        cfg.stall_threshold,
    )
    .map_err(|e| Failure::input(e.to_string()))?;
    for s in signals {
        println!(
            "{}",
            serde_json::to_string(&s).map_err(|e| Failure::other(e.to_string()))?
        );
    }
    Ok(())
}

fn cmd_list(cfg: &CliConfig) -> CmdResult {
    for r in list_cases(&cfg.store_root)? {
        println!(
            "{} {} {} {}",
            r.case_id,
            serde_json::to_value(r.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            r.source_format.as_str(),
            atd_core::trace::format_ts(&r.created_at)
        );
    }
    Ok(())
}

fn cmd_serve(
    cfg: &CliConfig,
    host: &str,
    port: u16,
    static_dir: Option<PathBuf>,
    cors_origin: Option<String>,
) -> CmdResult {
    let table = cfg.table().map_err(Failure::input)?;
    let service = ServiceConfig {
        summarizer: summarizer(cfg)?,
        table: Arc::new(table),
        stall_threshold: cfg.stall_threshold,
        static_dir,
        cors_origin,
        cache_summaries: cfg.summarizer_mode == SummarizerMode::Remote,
        ..ServiceConfig::new(&cfg.store_root)
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::other(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| Failure::new(5, format!("cannot bind {host}:{port}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Failure::new(5, e.to_string()))?;
        println!("listening on {}:{}", addr.ip(), addr.port());
        let _ = std::io::stdout().flush();
        atd_service::serve(listener, service)
            .await
            .map_err(|e| Failure::other(e.to_string()))
    })
}
