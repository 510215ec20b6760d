mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Dependency networks: learning, pseudo-Gibbs sampling and exact analysis.
#[derive(Debug, Parser)]
#[command(name = "depnet", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic dataset.
    #[command(subcommand)]
    Gen(Generator),
    /// Learn a dependency network from a dataset.
    Train(TrainArgs),
    /// Draw samples from a model with pseudo-Gibbs sampling.
    Sample(SampleArgs),
    /// Compare a model against the empirical distribution of a dataset.
    Eval(EvalArgs),
    /// Regenerate the four-protocol comparison table.
    #[command(name = "reproduce-table1")]
    ReproduceTable1(TableArgs),
    /// Solve for the stationary distribution of a model's sampler.
    Solve(SolveArgs),
    /// Rerun a command from its manifest and compare output hashes.
    Rerun(RerunArgs),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Binary Ising grid sampled exactly.
    Ising(IsingArgs),
    /// Random binary Bayesian network sampled exactly.
    Randbn(RandbnArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct IsingArgs {
    #[arg(long, default_value_t = 4)]
    pub rows: usize,
    #[arg(long, default_value_t = 3)]
    pub cols: usize,
    /// Nearest-neighbour coupling J.
    #[arg(long, default_value_t = depnet::datagen::DEFAULT_COUPLING, allow_negative_numbers = true)]
    pub coupling: f64,
    /// External field h.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub field: f64,
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RandbnArgs {
    #[arg(long, default_value_t = 12)]
    pub nodes: usize,
    #[arg(long, default_value_t = 21)]
    pub edges: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Penalty {
    Mdl,
    None,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Penalty::Mdl)]
    pub penalty: Penalty,
    /// Additive smoothing of the sampling tables (default 1/N).
    #[arg(long)]
    pub alpha_s: Option<f64>,
    /// Merge candidates considered per iteration (0 learns trees).
    #[arg(long)]
    pub merge_cap: Option<usize>,
    /// Trace CSV path (default `<out>.trace.csv`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scan {
    Random,
    Sequential,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Direct,
    Power,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Number of recorded samples.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Scan::Random)]
    pub scan: Scan,
    /// Clamped values, e.g. `X0=1,X3=0`.
    #[arg(long)]
    pub clamp: Option<String>,
    /// Steps discarded before recording (default 10 * n * max leaves * card).
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Record every `thin`-th state.
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Solve for the stationary distribution (needs a dense joint).
    #[arg(long)]
    pub exact: bool,
    #[arg(long, value_enum, default_value_t = SolveMethod::Direct)]
    pub method: SolveMethod,
    /// Also check the clamped decomposition for these variables, e.g. `X0,X2`.
    #[arg(long)]
    pub clamp_vars: Option<String>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TableArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Ising coupling J.
    #[arg(long, default_value_t = depnet::datagen::DEFAULT_COUPLING, allow_negative_numbers = true)]
    pub coupling: f64,
    #[arg(long, value_enum, default_value_t = SolveMethod::Direct)]
    pub method: SolveMethod,
    /// JSON rows path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = SolveMethod::Direct)]
    pub method: SolveMethod,
    #[arg(long, value_enum, default_value_t = Scan::Random)]
    pub scan: Scan,
    /// Clamped values, e.g. `X0=1`; random scan only.
    #[arg(long)]
    pub clamp: Option<String>,
    /// Stationary distribution CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}

/// Size of the worker pool.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("DEPNET_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("DEPNET_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("DEPNET_THREADS must be a positive integer, got 0".into());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match commands::run(cli.command, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
