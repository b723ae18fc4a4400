use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dca_core::enrichment::{DEFAULT_FC_THRESHOLD, DEFAULT_P_THRESHOLD};
use dca_core::fdr::{DEFAULT_FDR_THRESHOLD, DEFAULT_GRID_POINTS, DEFAULT_MIN_SCORES};
use dca_core::lac::{LacVariant, DEFAULT_TOP_FRACTION};
use dca_core::preprocess::DEFAULT_KNN_K;
use dca_core::varimax::{DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Parser)]
#[command(
    name = "dca",
    version,
    about = "Dynamic correlation analysis of expression matrices"
)]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "DCA_THREADS")]
    pub threads: Option<usize>,

    /// TOML file of default flag values; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, impute, filter and standardize an expression matrix.
    Preprocess(PreprocessArgs),
    /// Screen pairs, extract dynamic components and select pairs by local fdr.
    Dca(DcaArgs),
    /// Score gene-set enrichment of a selected pair list.
    Enrich(EnrichArgs),
    /// Run the LAC distribution study or the planted-factor recovery study.
    Simulate(SimulateArgs),
    /// Run preprocess, dca and enrich in sequence.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PreprocessOptions {
    /// Field delimiter: tab, comma or a single character.
    #[arg(long, default_value = "tab")]
    pub delimiter: String,

    /// Token marking a missing value (repeatable; empty cells are always missing).
    #[arg(long = "na-token", default_value = "NA")]
    pub na_tokens: Vec<String>,

    /// Neighbors used by KNN imputation.
    #[arg(long, default_value_t = DEFAULT_KNN_K)]
    pub knn_k: usize,

    /// Drop genes whose fraction of zero readings exceeds this value.
    #[arg(long, default_value_t = 0.2)]
    pub max_zero_frac: f64,

    /// Drop genes whose sample variance is below this value.
    #[arg(long, default_value_t = 1e-12)]
    pub min_variance: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct PreprocessArgs {
    /// Raw expression matrix (genes in rows, samples in columns).
    #[arg(long, short)]
    pub input: Option<PathBuf>,

    /// Directory for the standardized matrix and manifest.
    #[arg(long, short)]
    pub out_dir: Option<PathBuf>,

    /// Write the standardized matrix to stdout instead of the output directory.
    #[arg(long)]
    pub stdout: bool,

    #[command(flatten)]
    pub options: PreprocessOptions,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Squared,
    Absolute,
}

impl From<VariantArg> for LacVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Squared => LacVariant::Squared,
            VariantArg::Absolute => LacVariant::Absolute,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DcaOptions {
    /// LAC formula used to screen pairs.
    #[arg(long, value_enum, default_value_t = VariantArg::Squared)]
    pub variant: VariantArg,

    /// Fraction of pairs with the highest LAC kept for the product matrix.
    #[arg(long, default_value_t = DEFAULT_TOP_FRACTION)]
    pub top_fraction: f64,

    /// Number of dynamic components.
    #[arg(long, default_value_t = dca_core::dca::DEFAULT_COMPONENTS)]
    pub k: usize,

    /// Skip varimax rotation.
    #[arg(long)]
    pub no_rotate: bool,

    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub rotation_tol: f64,

    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub rotation_max_iter: usize,

    /// Local fdr cutoff for component-associated pairs.
    #[arg(long, default_value_t = DEFAULT_FDR_THRESHOLD)]
    pub fdr_threshold: f64,

    /// Grid points of the kernel density estimate.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub kde_grid: usize,

    /// Fewest scores accepted for a null fit.
    #[arg(long, default_value_t = DEFAULT_MIN_SCORES)]
    pub min_scores: usize,

    /// Also write the LAC of every pair.
    #[arg(long)]
    pub all_pairs: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct DcaArgs {
    /// Standardized expression matrix (tab separated).
    #[arg(long, short)]
    pub input: Option<PathBuf>,

    #[arg(long, short)]
    pub out_dir: Option<PathBuf>,

    #[command(flatten)]
    pub options: DcaOptions,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnrichOptions {
    /// Smallest gene set kept after intersecting with the matrix genes.
    #[arg(long, default_value_t = 50)]
    pub min_set: usize,

    /// Largest gene set kept after intersecting with the matrix genes.
    #[arg(long, default_value_t = 1000)]
    pub max_set: usize,

    /// Network edges need a p-value below this.
    #[arg(long, default_value_t = DEFAULT_P_THRESHOLD)]
    pub p_threshold: f64,

    /// Network edges need a fold change of at least this.
    #[arg(long, default_value_t = DEFAULT_FC_THRESHOLD)]
    pub fc_threshold: f64,

    /// Nodes below this degree are left out of the pruned view.
    #[arg(long, default_value_t = 0)]
    pub min_degree: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct EnrichArgs {
    /// Selected pairs; the first two columns hold gene ids, with a header row.
    #[arg(long)]
    pub pairs: Option<PathBuf>,

    /// Expression matrix whose genes define the universe (tab separated).
    #[arg(long)]
    pub matrix: Option<PathBuf>,

    /// Gene sets in GMT format.
    #[arg(long)]
    pub gmt: Option<PathBuf>,

    #[arg(long, short)]
    pub out_dir: Option<PathBuf>,

    #[command(flatten)]
    pub options: EnrichOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioArg {
    /// Full distribution grid over all pair scenarios.
    Grid,
    Dynamic,
    Correlated,
    Independent,
    PlantedFactor,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ScenarioArg::Grid)]
    pub scenario: ScenarioArg,

    /// Correlation levels (repeatable; default 0.4, 0.6, 0.8).
    #[arg(long)]
    pub rho: Vec<f64>,

    /// Sample sizes (repeatable; default 100, 200, 500, or 300 when planted).
    #[arg(long)]
    pub n: Vec<usize>,

    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Also write every replicate value in long format.
    #[arg(long)]
    pub raw: bool,

    /// Planted factor: number of genes.
    #[arg(long, default_value_t = 400)]
    pub genes: usize,

    /// Planted factor: number of planted pairs.
    #[arg(long, default_value_t = 100)]
    pub planted_pairs: usize,

    /// Planted factor: signal strength s in tanh(s z).
    #[arg(long, default_value_t = 1.5)]
    pub signal: f64,

    #[arg(long, short)]
    pub out_dir: Option<PathBuf>,

    /// Planted factor: pipeline settings.
    #[command(flatten)]
    pub dca: DcaOptions,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct PipelineArgs {
    /// Raw expression matrix.
    #[arg(long, short)]
    pub input: Option<PathBuf>,

    /// Gene sets in GMT format.
    #[arg(long)]
    pub gmt: Option<PathBuf>,

    #[arg(long, short)]
    pub out_dir: Option<PathBuf>,

    #[command(flatten)]
    pub preprocess: PreprocessOptions,

    #[command(flatten)]
    pub dca: DcaOptions,

    #[command(flatten)]
    pub enrich: EnrichOptions,
}
