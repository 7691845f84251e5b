use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "mctm", version, about = "Fit multivariate conditional transformation models on coresets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Draw datasets from the simulated processes.
    Simulate(SimulateArgs),
    /// Write the Bernstein basis and derivative rows of a dataset.
    Expand(ExpandArgs),
    /// Leverage scores and sampling probabilities.
    Scores(ScoresArgs),
    /// Draw one weighted coreset.
    Coreset(CoresetArgs),
    /// Fit a model on a dataset or on a coreset of it.
    Fit(FitArgs),
    /// Benchmark the coreset methods on the simulated processes.
    Bench(BenchArgs),
    /// Benchmark the coreset methods on a CSV dataset.
    Real(RealArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct OutArgs {
    /// Output directory; created if missing, its parent must exist.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Headed CSV file.
    #[arg(long)]
    pub input: PathBuf,
    /// `all`, column names, or zero-based indices and ranges such as `0-9`.
    #[arg(long, default_value = "all")]
    pub columns: String,
    /// Keep a uniform subsample of at most this many rows.
    #[arg(long)]
    pub max_rows: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct BasisArgs {
    /// Bernstein polynomial degree.
    #[arg(long, default_value_t = mctm_core::basis::DEFAULT_DEGREE)]
    pub degree: usize,
    /// Bound padding as a fraction of each column's range.
    #[arg(long, default_value_t = mctm_core::basis::DEFAULT_MARGIN)]
    pub margin: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SamplingArgs {
    /// Hull tolerance.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Share of the budget drawn by leverage sampling in the hybrid method.
    #[arg(long, default_value_t = mctm_core::coreset::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Pooling::Pooled)]
    pub pooling: Pooling,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    /// `index,weight` CSV from `mctm coreset`; fit on the full data if absent.
    #[arg(long)]
    pub coreset: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Also write marginal densities on this many grid points per dimension.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FitOptions {
    /// Lower clamp of the log-Jacobian argument.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum, default_value_t = Parametrization::Monotone)]
    pub parametrization: Parametrization,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// `all` or a comma list of process names or numbers.
    #[arg(long, default_value = "all")]
    pub dgps: String,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ExpandArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoresArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[arg(long, value_enum, default_value_t = ScoreKind::Auto)]
    pub method: ScoreKind,
    /// Rows of the sketch for `--method sketched`.
    #[arg(long)]
    pub sketch_dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CoresetArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[arg(long, default_value = "l2-hull")]
    pub method: String,
    /// Coreset size.
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Comma list of coreset sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [30usize, 100])]
    pub k: Vec<usize>,
    /// Comma list of `uniform`, `l2-only`, `l2-hull`.
    #[arg(long, default_value = "uniform,l2-only,l2-hull")]
    pub methods: String,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write zero in the timing columns so repeated runs are byte-identical.
    #[arg(long)]
    pub no_timings: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, default_value = "all")]
    pub dgps: String,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RealArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Dataset label in the output rows; defaults to the file stem.
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    Pooled,
    PerDimension,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parametrization {
    Monotone,
    RawClamped,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    Auto,
    Exact,
    Sketched,
    /// Non-canonical baseline.
    Ridge,
    /// Non-canonical baseline.
    Root,
}
