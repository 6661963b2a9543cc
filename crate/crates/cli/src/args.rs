//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mcc_core::solver::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use mcc_core::EigenFloor;

/// Name of the environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "MCC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mcc", version, about = "Sparse joint covariance estimation for compositional data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit at fixed penalties and write one matrix per population.
    Estimate(EstimateArgs),
    /// Pick penalties by V-fold cross-validation, then refit on all samples.
    Cv(CvArgs),
    /// Run the simulation study on a synthetic model.
    Simulate(SimulateArgs),
    /// Bootstrap stability of the edges estimated at fixed penalties.
    Stability(StabilityArgs),
    /// Write a Graphviz network per population from an estimate.
    ExportNetwork(ExportArgs),
}

pub fn parse_epsilon(s: &str) -> Result<EigenFloor, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(EigenFloor::Unconstrained);
    }
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is neither a number nor 'none'"))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("epsilon must be positive, got {v}"));
    }
    Ok(EigenFloor::Floor(v))
}

fn nonneg(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(format!("expected a finite nonnegative number, got {v}"));
    }
    Ok(v)
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Count table, one row per sample (comma or tab separated).
    #[arg(long)]
    pub input: PathBuf,
    /// Column holding population labels; all rows form one population without it.
    #[arg(long)]
    pub labels_column: Option<String>,
    /// Added to every count before closure.
    #[arg(long, default_value_t = 0.5, value_parser = nonneg)]
    pub pseudocount: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Eigenvalue floor, or "none" to drop the constraint.
    #[arg(long, default_value = "0.0001", value_parser = parse_epsilon)]
    pub epsilon: EigenFloor,
    /// Relative objective change that counts as converged.
    #[arg(long, default_value_t = DEFAULT_TOL, value_parser = nonneg)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Exit 0 even when a fit hit the iteration limit (outputs are flagged).
    #[arg(long)]
    pub allow_nonconverged: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    /// Lasso weight on off-diagonal entries.
    #[arg(long, value_parser = nonneg)]
    pub lambda: f64,
    /// Group weight tying each entry across populations.
    #[arg(long, default_value_t = 0.0, value_parser = nonneg)]
    pub gamma: f64,
    /// Comma-separated lasso weights, one per population (overrides --lambda).
    #[arg(long, value_delimiter = ',', value_parser = nonneg)]
    pub per_population_lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Comma-separated lambda grid; defaults to a log grid below lambda_max.
    #[arg(long, value_delimiter = ',', value_parser = nonneg)]
    pub lambdas: Option<Vec<f64>>,
    /// Comma-separated gamma grid; defaults to a log grid plus zero.
    #[arg(long, value_delimiter = ',', value_parser = nonneg)]
    pub gammas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Synthetic model: 1, 2 or 3.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub model: u8,
    /// Samples per population in the training and the validation set.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated estimators among mcc, mcc-h, oracle.
    #[arg(long, value_delimiter = ',', default_value = "mcc,mcc-h,oracle")]
    pub methods: Vec<String>,
    /// Lambda grid length.
    #[arg(long, default_value_t = 8)]
    pub n_lambda: usize,
    /// Smallest lambda as a fraction of lambda_max.
    #[arg(long, default_value_t = 0.01)]
    pub lambda_min_ratio: f64,
    /// Comma-separated nonzero gammas as fractions of gamma_max.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.1", value_parser = nonneg)]
    pub gamma_fractions: Vec<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Number of bootstrap replicates.
    #[arg(long, default_value_t = 100)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Sidecar written by estimate or cv (estimate.json).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
