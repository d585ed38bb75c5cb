pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use runoff::data::DataError;
use runoff::metrics::MetricError;
use runoff::models::ModelError;
use runoff::train::TrainError;

#[derive(Debug, Parser)]
#[command(name = "runoff", version, about = "Rainfall-runoff sequence models: data, training, evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic linear-reservoir dataset and a config to train on it.
    GenerateSynthetic(RunArgs),
    /// Train one model per seed.
    Train(RunArgs),
    /// Score checkpoints on the test window and summarize the ensemble.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of every op and architecture.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Repeatable; replaces the configured seeds.
    #[arg(long = "seed", value_name = "N")]
    pub seeds: Vec<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Repeatable; defaults to every `.ckpt` in the run directory.
    #[arg(long = "checkpoint", value_name = "PATH")]
    pub checkpoints: Vec<PathBuf>,
    /// Score a stub that returns the observed target.
    #[arg(long, hide = true)]
    pub replay_oracle: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = runoff::verify::SUITE_TOL)]
    pub tol: f64,
    /// Flips the sign of one op's backward rule.
    #[arg(long, hide = true, value_name = "OP")]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> CliError {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Verification(_) => 5,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } | TrainError::NonFiniteGradient { .. } => CliError::Divergence(e.to_string()),
            TrainError::Io(_) => CliError::Io(e.to_string()),
            TrainError::Data(d) => d.into(),
            TrainError::Model(m) => m.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Io(_) => CliError::Io(e.to_string()),
            MetricError::Data(d) => d.into(),
            MetricError::Model(m) => m.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenerateSynthetic(a) => commands::generate_synthetic(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    }
}
