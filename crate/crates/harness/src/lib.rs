//! Command-line harness for escapelab experiments.
//!
//! Each subcommand reads an [`ExperimentConfig`], runs one experiment with a
//! fixed seed and writes a [`RunRecord`] as JSON plus one CSV per table.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical-signal failure,
//! 1 internal or I/O failure, 64 usage error.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod group_file;
pub mod record;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{ExperimentConfig, OutputFormat};
pub use record::{load, persist, Cell, RunRecord, Table, Warning, WarningKind, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

pub const THREADS_ENV: &str = "ESCAPELAB_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] escapelab::Error),
    #[error("{path}: unsupported record schema version {found}; expected {SCHEMA_VERSION}")]
    SchemaVersion { path: String, found: String },
    #[error("malformed record: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => EXIT_USAGE,
            HarnessError::Config(_) | HarnessError::SchemaVersion { .. } | HarnessError::Format(_) => EXIT_VALIDATION,
            HarnessError::Core(e) if e.is_validation() => EXIT_VALIDATION,
            HarnessError::Core(_) => EXIT_NUMERICAL,
            HarnessError::Io(_) | HarnessError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "escapelab", version, about = "Seeded escape-rate, measure and plane-wave experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `dynamics.seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Overrides `output.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; falls back to ESCAPELAB_THREADS, then to all cores.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Overrides `output.formats`.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check a group description and list its disks, free arcs and limit set.
    ValidateGroup,
    /// Critical exponent by both estimators.
    Delta,
    /// Trapped-measure curve and escape-rate fit.
    EscapeRate,
    /// Maximal expansion rate over trapped samples.
    LambdaMax,
    /// Interpolated remainder and lower-bound constant.
    Remainder,
    /// Pushforward against group-sum limiting measures.
    MeasuresCompare,
    /// Boundary disintegration of the Liouville measure.
    Disintegration,
    /// Plane-wave matrix elements against the limiting measure.
    Planewave,
    /// Leading trace term.
    Weyl,
    /// Summary table of the records in the output directory.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ValidateGroup => "validate-group",
            Command::Delta => "delta",
            Command::EscapeRate => "escape-rate",
            Command::LambdaMax => "lambda-max",
            Command::Remainder => "remainder",
            Command::MeasuresCompare => "measures-compare",
            Command::Disintegration => "disintegration",
            Command::Planewave => "planewave",
            Command::Weyl => "weyl",
            Command::Report => "report",
        }
    }
}

/// A finished run: the record and the files written for it.
#[derive(Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub files: Vec<PathBuf>,
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, HarnessError> {
    if let Some(n) = flag {
        return if n == 0 { Err(HarnessError::Usage("--threads must be at least 1".into())) } else { Ok(Some(n)) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(HarnessError::Usage(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

/// Loads and validates the config, runs the command and persists the record.
pub fn execute(cli: &Cli) -> Result<RunOutcome, HarnessError> {
    if let Some(n) = thread_count(cli.threads)? {
        // a pool already exists when execute is called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.dynamics.seed = seed;
    }
    let setting = cfg.validate()?;
    // output overrides decide where files go; they are not part of the experiment
    let out_dir = cli.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    let format = cli.format.unwrap_or(cfg.output.formats);
    let seed = cfg.dynamics.seed;
    let started = timestamp();
    let out = match cli.command {
        Command::ValidateGroup => commands::validate_group(&cfg, &setting),
        Command::Delta => commands::delta(&cfg, &setting),
        Command::EscapeRate => commands::escape_rate(&cfg, &setting, seed),
        Command::LambdaMax => commands::lambda_max(&cfg, &setting, seed),
        Command::Remainder => commands::remainder(&cfg, &setting, seed),
        Command::MeasuresCompare => commands::measures_compare(&cfg, &setting),
        Command::Disintegration => commands::disintegration(&cfg, &setting, seed),
        Command::Planewave => commands::planewave(&cfg, &setting),
        Command::Weyl => commands::weyl(&cfg, &setting),
        Command::Report => commands::report(&out_dir),
    }?;
    let config = cfg.canonical_json();
    let config_hash = config::hash_canonical(&config);
    let record = RunRecord {
        schema: SCHEMA_VERSION,
        run_id: RunRecord::run_id(cli.command.name(), &config_hash, seed),
        command: cli.command.name().to_string(),
        config_hash,
        config,
        seed,
        started,
        finished: timestamp(),
        tables: out.tables,
        summary: out.summary,
        warnings: out.warnings,
    };
    let files = persist(&record, &out_dir, format)?;
    Ok(RunOutcome { record, files })
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            for w in &outcome.record.warnings {
                eprintln!("warning[{}]: {}", w.kind.name(), w.message);
            }
            println!("{}", outcome.record.run_id);
            for (k, v) in &outcome.record.summary {
                println!("  {k} = {}", serde_json::to_string(v).unwrap_or_default());
            }
            for f in &outcome.files {
                println!("  wrote {}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
