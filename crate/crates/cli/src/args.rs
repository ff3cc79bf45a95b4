use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "hdgranger",
    version,
    about = "Debiased sparse-group LASSO Granger causality tests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the sparse-group LASSO with cross-validated lambda.
    Fit(ModelArgs),
    /// Wald tests of Granger non-causality for groups over a bandwidth/kernel grid.
    Granger(GrangerArgs),
    /// Nodewise LASSO rows of the precision matrix.
    Nodewise(NodewiseArgs),
    /// Coverage experiment on the AR(1) simulation design.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// CSV with a date column followed by numeric series.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column.
    #[arg(long)]
    pub response: String,
    /// JSON file mapping group name to a list of series or column names.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Lags of every other low-frequency series (0 uses them as given).
    #[arg(long)]
    pub lags: Option<usize>,
    /// Lags of the response.
    #[arg(long)]
    pub ar_lags: Option<usize>,
    /// Prefix of a high-frequency lag block `PREFIX_1..PREFIX_L` (1 = most recent).
    #[arg(long = "hf")]
    pub hf: Vec<String>,
    #[arg(long)]
    pub legendre_degree: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fixed penalty; skips cross-validation.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub grid_min_ratio: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
    /// Weight group norms by sqrt(group size).
    #[arg(long)]
    pub sqrt_group_weights: bool,
    /// Recorded in the report; estimation itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// TOML file of knob values; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct GrangerArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Group to test (repeatable).
    #[arg(long = "test-group", required = true)]
    pub test_group: Vec<String>,
    /// Bandwidth M_T (repeatable).
    #[arg(long = "mt")]
    pub mt: Vec<usize>,
    /// parzen, qs or bartlett (repeatable).
    #[arg(long = "kernel")]
    pub kernel: Vec<String>,
    /// CSV p-value table; defaults to the report path with a .csv extension.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct NodewiseArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Groups whose rows are estimated (repeatable); all columns if absent.
    #[arg(long = "test-group")]
    pub test_group: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long = "T")]
    pub t: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub n_active: Option<usize>,
    /// Number of replications.
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long = "mt")]
    pub mt: Vec<usize>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub grid_min_ratio: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub beta_low: Option<f64>,
    #[arg(long)]
    pub beta_high: Option<f64>,
    /// Draw beta once instead of per replication.
    #[arg(long)]
    pub freeze_beta: bool,
    /// Standardize each simulated sample before fitting.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV table path; metadata goes next to it with a .json extension.
    #[arg(long)]
    pub out: PathBuf,
}
