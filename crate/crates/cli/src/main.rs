//! `commdecay`: simulate flow data, fit break-point models, check
//! convergence, predict and benchmark.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commdecay::ModelCase;

#[derive(Parser)]
#[command(name = "commdecay", version, about = "Break-point gravity models for communication flows")]
struct Cli {
    /// Log filter (error, warn, info, debug, trace); RUST_LOG takes precedence.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its truth record.
    Simulate(SimulateArgs),
    /// Initialize and run the MCMC chains; writes one trace per chain.
    Fit(FitArgs),
    /// PSRF series, credible intervals and inclusion probabilities.
    Diagnose(DiagnoseArgs),
    /// Model-averaged predicted log-intensities.
    Predict(PredictArgs),
    /// Time outer iterations across location counts.
    Bench(BenchArgs),
    /// Desk-scale simulation study (prediction error, acceptance, coverage).
    Study(StudyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CaseArg {
    #[value(name = "I", alias = "1")]
    One,
    #[value(name = "II", alias = "2")]
    Two,
}

impl From<CaseArg> for ModelCase {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::One => ModelCase::I,
            CaseArg::Two => ModelCase::II,
        }
    }
}

#[derive(Args)]
pub struct OutArg {
    /// Output directory (created if missing).
    #[arg(long, env = "COMMDECAY_OUT", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Number of locations.
    #[arg(long = "S")]
    pub s: Option<usize>,
    /// Error variance (must be positive).
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reuse the locations and distances of an existing dataset directory.
    #[arg(long)]
    pub geometry_from: Option<PathBuf>,
    /// JSON file with scenario settings (a previous manifest works).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args)]
pub struct FitArgs {
    /// Dataset directory with locations.csv, flows.csv and optionally distances.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Simulation truth record; its exact outcomes replace the rounded counts.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum, ignore_case = true)]
    pub case: Option<CaseArg>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Outer iterations per chain, burn-in included.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Break-point random-walk proposal variance.
    #[arg(long)]
    pub sigma2_theta: Option<f64>,
    /// Inner Gibbs or reversible-jump sweeps per outer iteration.
    #[arg(long)]
    pub inner_h: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: one per chain).
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON file with `case`, `data` and `sampler` settings (a previous manifest works).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args)]
pub struct TraceInput {
    /// Directory of a previous fit (reads its manifest).
    #[arg(long, conflicts_with = "trace")]
    pub fit: Option<PathBuf>,
    /// Trace files, one per chain.
    #[arg(long, num_args = 1..)]
    pub trace: Vec<PathBuf>,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub input: TraceInput,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: TraceInput,
    /// Dataset directory supplying populations and distances.
    #[arg(long)]
    pub data: PathBuf,
    /// CSV of `source_id,destination_id` pairs (default: every retained pair of the data).
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Predictive interval (adds residual noise) instead of an interval for the mean.
    #[arg(long)]
    pub predictive: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Location counts, ascending.
    #[arg(long = "S", value_delimiter = ',', default_value = "10,20,40,80")]
    pub s: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub min_iterations: usize,
    #[arg(long, default_value_t = 0.5)]
    pub min_seconds: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args)]
pub struct StudyArgs {
    #[arg(long = "S")]
    pub s: Option<usize>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub datasets: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Proposal variances to sweep.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    #[arg(long, value_enum, ignore_case = true)]
    pub case: Option<CaseArg>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// JSON file with `scenario`, `sampler` and `case` settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log)).init();
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a, &argv),
        Command::Fit(a) => commands::fit(a, &argv),
        Command::Diagnose(a) => commands::diagnose(a, &argv),
        Command::Predict(a) => commands::predict(a, &argv),
        Command::Bench(a) => commands::bench(a, &argv),
        Command::Study(a) => commands::study(a, &argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<config::UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
