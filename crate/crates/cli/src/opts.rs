use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "locality-rd",
    version,
    about = "Locality-level RD estimates at an age cutoff"
)]
pub struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-locality discontinuities, national pooled estimate and plot data.
    Estimate(EstimateArgs),
    /// Pool the panel to a coarser geography.
    Aggregate(AggregateArgs),
    /// Cross-locality variance reduction at the cutoff.
    Variance(VarianceArgs),
    /// Empirical-Bayes shrinkage of locality estimates.
    Shrink(ShrinkArgs),
    /// Covariate-based MSE-minimising forecasts.
    Forecast(ForecastArgs),
    /// Coefficient tables relating estimates to covariates.
    Correlate(CorrelateArgs),
    /// Decompose the change in mean effects between two regimes.
    Decompose(DecomposeArgs),
    /// Equal-count binned means of two columns.
    Binscatter(BinscatterArgs),
    /// Synthetic panels and coverage studies.
    Simulate(SimulateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelArg {
    Cz,
    State,
    Division,
    Region,
    National,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsArg {
    Population,
    None,
}

/// Weighting of the shrinkage and forecast moments.
#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentsArg {
    Precision,
    Unweighted,
}

/// Moments used to standardize covariates before the Lasso.
#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StandardizeArg {
    Weighted,
    Unweighted,
}

impl StandardizeArg {
    pub fn weighted(self) -> bool {
        self == Self::Weighted
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Honest,
    Parametric,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeModeArg {
    Robust,
    ClusterAge,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeArg {
    None,
    Region,
    Division,
    State,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupArg {
    Region,
    Division,
    State,
}

/// Panel input and RD settings shared by commands that estimate.
#[derive(Args, Clone, Debug, Serialize)]
pub struct RdArgs {
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Outcome(s) to estimate; repeat or comma-separate. Defaults to every outcome.
    #[arg(long, value_delimiter = ',')]
    pub outcome: Vec<String>,
    #[arg(long, value_enum, default_value = "cz")]
    pub level: LevelArg,
    #[arg(long, default_value_t = 65.0)]
    pub cutoff: f64,
    #[arg(long, default_value_t = 5)]
    pub bandwidth: u32,
    /// Ages excluded around the cutoff.
    #[arg(long, value_delimiter = ',', default_value = "65")]
    pub donut: Vec<i32>,
    #[arg(long)]
    pub no_donut: bool,
    #[arg(long, default_value_t = 4.0)]
    pub bound_scale: f64,
    /// Fixed curvature bound; the left-side pilot is used when absent.
    #[arg(long)]
    pub curvature: Option<f64>,
    /// Restrict the pilot to this many years left of the cutoff.
    #[arg(long)]
    pub pilot_width: Option<u32>,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    /// Only use these periods.
    #[arg(long, value_delimiter = ',')]
    pub periods: Vec<String>,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub rd: RdArgs,
    #[arg(long, value_enum, default_value = "honest")]
    pub method: MethodArg,
    /// Polynomial order for the parametric method.
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    #[arg(long, value_enum, default_value = "robust")]
    pub se_mode: SeModeArg,
    /// Also write a bandwidth by bound-scale grid of honest estimates.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct AggregateArgs {
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long, value_enum, default_value = "state")]
    pub level: LevelArg,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct VarianceArgs {
    #[command(flatten)]
    pub rd: RdArgs,
    #[arg(long, value_enum, default_value = "population")]
    pub weights: WeightsArg,
}

/// Where locality estimates come from: a panel (estimated on the fly) or an
/// `estimates.csv` written by `estimate`.
#[derive(Args, Clone, Debug, Serialize)]
pub struct SourceArgs {
    #[command(flatten)]
    pub rd: RdArgs,
    #[arg(long, conflicts_with = "panel")]
    pub estimates: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct ShrinkArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_enum, default_value = "precision")]
    pub moments: MomentsArg,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub covariates: PathBuf,
    /// Coverage outcome; forecasts are then per newly insured.
    #[arg(long)]
    pub first_stage: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    pub weak_threshold: f64,
    #[arg(long, value_enum, default_value = "precision")]
    pub moments: MomentsArg,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, value_enum, default_value = "weighted")]
    pub standardize: StandardizeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "population")]
    pub weights: WeightsArg,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub covariates: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    pub fe: FeArg,
    /// Divide coefficients by the national estimate.
    #[arg(long)]
    pub scale_national: bool,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, value_enum, default_value = "weighted")]
    pub standardize: StandardizeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "population")]
    pub weights: WeightsArg,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub rd: RdArgs,
    /// Precomputed per-locality inputs (locality_id, period, beta, gamma_h,
    /// weight, and optionally region and gamma) instead of a panel.
    #[arg(long, conflicts_with = "panel")]
    pub inputs: Option<PathBuf>,
    #[arg(long)]
    pub first_stage: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub pre_periods: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub post_periods: Vec<String>,
    /// Also run difference-in-discontinuities of the post periods against these.
    #[arg(long, value_delimiter = ',')]
    pub baseline_periods: Vec<String>,
    #[arg(long, value_enum, default_value = "region")]
    pub group_by: GroupArg,
    /// Group subtracted in the between-group differences.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    pub weak_threshold: f64,
    #[arg(long, value_enum, default_value = "population")]
    pub weights: WeightsArg,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct BinscatterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    #[arg(long)]
    pub weight: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageArg {
    Honest,
    Pilot,
    Conventional,
    Parametric,
    ParametricCluster,
    DiffInDisc,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct SimulateArgs {
    /// Generator settings as JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub localities: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run a coverage study with this estimator instead of writing a panel.
    #[arg(long, value_enum)]
    pub coverage: Option<CoverageArg>,
    #[arg(long, default_value_t = 500)]
    pub replications: u64,
    #[arg(long, default_value_t = 5)]
    pub bandwidth: u32,
    #[arg(long, value_delimiter = ',', default_value = "65")]
    pub donut: Vec<i32>,
    #[arg(long, default_value_t = 4.0)]
    pub bound_scale: f64,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
}
