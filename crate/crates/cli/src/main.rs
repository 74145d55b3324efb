//! `mgsim`: scenario generation, rule-based and PPO dispatch runs, KPI comparison.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use microgrid_core::MgError;
use thiserror::Error;

/// Environment variable naming the root directory for run artifacts.
pub const OUT_ROOT_ENV: &str = "MGSIM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "mgsim", version, about = "Hybrid microgrid dispatch: RBC vs PPO")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed (outage process and training). For gen-scenario, the synthesis seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel rollout workers for training.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Artifact directory (default: $MGSIM_OUT_DIR/<command> or runs/<command>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scenario CSV and its statistics.
    GenScenario(GenArgs),
    /// Run the rule-based controller over a scenario.
    SimulateRbc(SimArgs),
    /// Train a PPO policy.
    TrainPpo(TrainArgs),
    /// Greedy evaluation of a trained checkpoint.
    Evaluate(EvalArgs),
    /// Compare two runs (baseline first) and emit the KPI table and chart.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub peak_load_kw: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EpisodeArgs {
    /// Scenario CSV to use instead of the synthetic generator.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Episode length in steps.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub episode: EpisodeArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub episode: EpisodeArgs,
    /// Environment steps to train for
    #[arg(long)]
    pub total_steps: Option<usize>,
    /// Transitions collected per update.
    #[arg(long)]
    pub rollout: Option<usize>,
    /// Save a checkpoint every N updates (0 disables)
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint file.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub episode: EpisodeArgs,
    /// Checkpoint written by train-ppo.
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Baseline run directory (or its trajectory.csv).
    #[arg(long)]
    pub rbc: PathBuf,
    /// Candidate run directory (or its trajectory.csv).
    #[arg(long)]
    pub ppo: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] MgError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Json { .. } => 2,
            CliError::Read { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            CliError::Core(e) if e.is_validation() => 2,
            _ => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
