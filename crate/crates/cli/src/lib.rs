//! `cosparse` command-line pipeline: synthesize or ingest houses, train
//! dictionaries, disaggregate, evaluate and run benchmark sweeps.

pub mod benchmark;
pub mod config;
pub mod disagg;
pub mod evaluate;
pub mod pipeline;
pub mod synth;
pub mod train;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use cosparse_core::Error;

#[derive(Debug, Parser)]
#[command(name = "cosparse", version, about = "Analysis co-sparse energy disaggregation")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic house dataset.
    Synth(synth::SynthArgs),
    /// Train per-appliance dictionaries.
    Train(train::TrainArgs),
    /// Split a house's aggregate into appliance estimates.
    Disaggregate(disagg::DisaggArgs),
    /// Score estimates against ground truth.
    Evaluate(evaluate::EvaluateArgs),
    /// Sweep training volume, models and replications.
    Benchmark(benchmark::BenchmarkArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Disaggregate(_) => "disaggregate",
            Command::Evaluate(_) => "evaluate",
            Command::Benchmark(_) => "benchmark",
        }
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    /// Missing required input; the caller prints the command's usage.
    Usage {
        command: &'static str,
        msg: String,
    },
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Usage { .. } => "usage",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage { msg, .. } => f.write_str(msg),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let g = Globals { seed: cli.seed, config: cli.config, out: cli.out };
    match cli.command {
        Command::Synth(a) => synth::run(&g, &a),
        Command::Train(a) => Ok(train::run(&g, &a)?),
        Command::Disaggregate(a) => Ok(disagg::run(&g, &a)?),
        Command::Evaluate(a) => Ok(evaluate::run(&g, &a)?),
        Command::Benchmark(a) => Ok(benchmark::run(&g, &a)?),
    }
}
