//! `snscp`: solve step-constrained problems, check stationarity, evaluate
//! sample-size bounds, run benchmark sweeps and export big-M models.
//!
//! Exit codes: 0 on success, 1 on a configuration or input error, 2 when the
//! solver aborts.

mod commands;
mod config;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("solver aborted: {0}")]
    Abort(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Abort(_) => 2,
        }
    }
}

impl From<snscp::Error> for CliError {
    fn from(e: snscp::Error) -> Self {
        Self::Config(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "snscp",
    version,
    about = "Smoothing Newton solver for step-function constrained problems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve an instance and write the iteration trace.
    Solve(SolveArgs),
    /// Report KKT, tau-stationarity and binary-KKT verdicts at a point.
    Check(CheckArgs),
    /// Evaluate sample-size bounds and confidence levels.
    Bounds(BoundsArgs),
    /// Sweep one parameter over repeated seeded trials and write medians as CSV.
    Bench(BenchArgs),
    /// Write the big-M binary reformulation in LP format.
    ExportBip(ExportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Two-variable instance whose binary-KKT point (1, 1) is not a KKT point.
    Counterexample,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

/// Instance selection. Without a preset or sample file a seeded
/// norm-optimization instance is generated.
#[derive(Args, Debug, Default, Clone)]
pub struct InstanceArgs {
    /// key = value configuration file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Raw samples in block CSV layout, one M x K block per sample.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Decision variables K.
    #[arg(long)]
    pub k: Option<usize>,
    /// Constraints per sample M.
    #[arg(long)]
    pub m: Option<usize>,
    /// Samples N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Risk level; s defaults to ceil(alpha N).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Violation budget.
    #[arg(long)]
    pub s: Option<usize>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct SolverArgs {
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "mu-bar")]
    pub mu_bar: Option<f64>,
    #[arg(long = "max-it")]
    pub max_it: Option<usize>,
    /// Halting tolerance is tol-scale * K * M * N.
    #[arg(long = "tol-scale")]
    pub tol_scale: Option<f64>,
    #[arg(long = "t-max")]
    pub t_max: Option<u32>,
    #[arg(long = "pivot-tol")]
    pub pivot_tol: Option<f64>,
    /// Line-search zero threshold relative to the residual norm.
    #[arg(long = "ls-zero-rel")]
    pub ls_zero_rel: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write the iteration trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write the final point (x, then the rows of W).
    #[arg(long)]
    pub point: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Point file: x on the first data line, optionally followed by the M rows of W.
    pub point_file: PathBuf,
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug, Default)]
pub struct BoundsArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub s: Option<u64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long = "alpha-star")]
    pub alpha_star: Option<f64>,
    /// Sample size N.
    #[arg(long)]
    pub n: Option<u64>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// VAR=v1,v2,... with VAR one of k, m, n, alpha, tau.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Trials per sweep point; trial t uses instance seed `seed + t`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long = "big-m")]
    pub big_m: Option<f64>,
    /// Destination LP file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
