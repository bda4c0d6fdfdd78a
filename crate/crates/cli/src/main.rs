//! `solrefine` command-line driver.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 environment error (verifier
//! binaries missing), 4 one or more tasks failed, 1 anything else.

mod dataset;
mod eval;
mod manifest;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use solrefine_core::metrics::ReportFormat;
use solrefine_core::refine::SelectionPolicy;
use solrefine_core::trajectory::{DatasetVariant, TruncateMode, DEFAULT_TRAIN_FRACTION, DEFAULT_TRUNCATE_LIMIT};
use tracing_subscriber::EnvFilter;

use crate::manifest::RunManifest;

#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Environment(anyhow::Error),
    Partial(String),
    Other(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Environment(_) => 3,
            CliError::Partial(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e:#}"),
            CliError::Environment(e) => write!(f, "environment error: {e:#}"),
            CliError::Partial(msg) => f.write_str(msg),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "solrefine", version, about = "Verification-driven refinement of generated Solidity contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every unfinished task in a manifest.
    Run { manifest: PathBuf },
    /// Continue a previous run from its checkpoints.
    Resume { manifest: PathBuf },
    /// Compute metrics over finished runs.
    Eval {
        dir: PathBuf,
        /// Results directory or JSON file of file results to compare against.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value = "best", value_parser = parse_policy)]
        policy: SelectionPolicy,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export fine-tuning datasets from finished runs.
    Dataset {
        /// One or more results directories (mix needs summary-mode runs).
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "tracker")]
        variant: DatasetVariant,
        #[arg(long, default_value = "none", value_parser = parse_truncate)]
        truncate: Truncation,
        #[arg(long, default_value_t = DEFAULT_TRUNCATE_LIMIT)]
        limit: usize,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
        train_frac: f64,
        /// Keep runs that did not end in success.
        #[arg(long)]
        include_all: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_policy(s: &str) -> Result<SelectionPolicy, String> {
    match s {
        "best" | "best-score" => Ok(SelectionPolicy::BestScore),
        "min-vuln" => Ok(SelectionPolicy::MinVuln),
        other => Err(format!("unknown policy `{other}` (expected best or min-vuln)")),
    }
}

/// `--truncate` value; `none` keeps samples whole.
#[derive(Debug, Clone, Copy)]
struct Truncation(Option<TruncateMode>);

fn parse_truncate(s: &str) -> Result<Truncation, String> {
    if s == "none" {
        return Ok(Truncation(None));
    }
    s.parse().map(|m| Truncation(Some(m)))
}

fn load_manifest(path: &Path) -> Result<RunManifest, CliError> {
    RunManifest::load(path).map_err(CliError::Config)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { manifest } => run::cmd_run(&load_manifest(&manifest)?),
        Command::Resume { manifest } => {
            let manifest = load_manifest(&manifest)?;
            if !manifest.checkpoint_dir().is_dir() {
                return Err(CliError::Config(anyhow::anyhow!(
                    "nothing to resume: {} does not exist",
                    manifest.checkpoint_dir().display()
                )));
            }
            run::cmd_run(&manifest)
        }
        Command::Eval {
            dir,
            baseline,
            policy,
            format,
            out,
        } => eval::cmd_eval(&dir, baseline.as_deref(), policy, format, out.as_deref()).map_err(CliError::Other),
        Command::Dataset {
            dirs,
            variant,
            truncate,
            limit,
            split_seed,
            train_frac,
            include_all,
            out,
        } => {
            if limit == 0 {
                return Err(CliError::Config(anyhow::anyhow!("--limit must be positive")));
            }
            let args = dataset::DatasetArgs {
                dirs,
                variant,
                truncate: truncate.0,
                limit,
                split_seed,
                train_frac,
                include_all,
                out,
            };
            dataset::cmd_dataset(&args).map(|_| ()).map_err(CliError::Other)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("solrefine: {err}");
            ExitCode::from(err.code())
        }
    }
}
