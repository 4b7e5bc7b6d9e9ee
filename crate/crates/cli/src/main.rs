//! `delaylqr`: data generation, regulator synthesis, simulation and σ sweeps
//! for input-delay systems.
//!
//! Exit codes: 0 success, 2 infeasible, 3 solver or numerical failure
//! (including a closed loop that fails its guarantee), 4 configuration or
//! input error.

// `!(x < y)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] delaylqr::Error),
    #[error("guarantee violated: {0}")]
    Guarantee(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use delaylqr::Error as E;
        match self {
            CliError::Config(_) => 4,
            CliError::Guarantee(_) => 3,
            CliError::Core(e) => match e {
                E::Infeasible(_) | E::EmptyConsistencySet { .. } => 2,
                E::Solver(_) | E::NonFinite { .. } | E::Sampling(_) | E::CostDiverges { .. } => 3,
                E::Dimension(_)
                | E::Invalid(_)
                | E::InsufficientHistory { .. }
                | E::Io(_)
                | E::Json(_)
                | E::Csv(_) => 4,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Robust design from data.
    Dd,
    /// Design on the config plant.
    Model,
    /// Robust stabilization without a performance bound.
    Stabilize,
}

#[derive(Debug, Parser)]
#[command(
    name = "delaylqr",
    version,
    about = "Sub-optimal LQ regulators for input-delay systems from noisy data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the open-loop experiment and write data.json and trajectory.csv.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Overrides data.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve for a gain and write result.json.
    Synthesize {
        /// Data set from `generate` (not needed with --mode model).
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "dd")]
        mode: Mode,
        /// Noise level; overrides phi.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Run the closed loop on the config plant and write closed_loop.csv and summary.json.
    Simulate {
        result: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Minimize γ over the σ grid and write sweep.csv and sweep.json.
    Sweep {
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rank, regularity and nonemptiness checks on a data set; writes check.json.
    Check {
        data: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sigma: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common, seed } => commands::generate(&common.config, &common.out, seed),
        Command::Synthesize {
            data,
            common,
            mode,
            sigma,
        } => commands::synthesize(data.as_deref(), &common.config, &common.out, mode, sigma),
        Command::Simulate { result, common } => {
            commands::simulate(&result, &common.config, &common.out)
        }
        Command::Sweep { data, common } => commands::sweep(&data, &common.config, &common.out),
        Command::Check {
            data,
            common,
            sigma,
        } => commands::check(&data, &common.config, &common.out, sigma),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
