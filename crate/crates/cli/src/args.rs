use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use immunorec::affinity::{AffinityMeasure, MeasureKind};
use immunorec::datastore::{IngestConfig, RatingFormat, SyntheticConfig};
use immunorec::evaluation::TrialMode;
use immunorec::immune_network::{ImmuneParams, NegativeAffinity};

/// Immune-network movie recommender and experiment harness.
#[derive(Debug, Parser)]
#[command(name = "immunorec", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Generate a clustered synthetic ratings file.
    Gen(GenArgs),
    /// Validate a ratings file and print the load report.
    IngestCheck(IngestCheckArgs),
    /// Print every affinity measure for a pair of users.
    Affinity(AffinityArgs),
    /// Run the immune network for one user and list recommendations.
    Recommend(RecommendArgs),
    /// Run an experiment.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "experiment")]
pub enum EvalCommand {
    /// Hidden-rating prediction accuracy.
    Accuracy(AccuracyArgs),
    /// Share of Kendall's Tau pairs ignored as one-sided ties.
    Ties(TiesArgs),
    /// Accuracy under two measures on identical trials, with a paired t statistic.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 500)]
    pub users: usize,
    #[arg(long, default_value_t = 300)]
    pub movies: usize,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    /// Half-width of the uniform noise added to latent preferences.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 25)]
    pub min_ratings: usize,
    #[arg(long, default_value_t = 60)]
    pub max_ratings: usize,
    /// Pair clusters with mirrored preferences.
    #[arg(long)]
    pub mirrored: bool,
    #[arg(long)]
    pub seed: u64,
    #[arg(short = 'o', long)]
    pub output: PathBuf,
}

impl GenArgs {
    pub fn config(&self) -> SyntheticConfig {
        SyntheticConfig {
            num_users: self.users,
            num_movies: self.movies,
            num_clusters: self.clusters,
            noise: self.noise,
            min_ratings_per_user: self.min_ratings,
            max_ratings_per_user: self.max_ratings,
            mirrored_clusters: self.mirrored,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Category,
    Scaled,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Ratings file (`user_id,movie_id,rating`, no header).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::Category)]
    pub format: DataFormat,
    /// Users with fewer ratings are dropped on load.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub min_ratings: u64,
}

impl DataArgs {
    pub fn ingest(&self) -> IngestConfig {
        IngestConfig {
            format: match self.format {
                DataFormat::Category => RatingFormat::CategoryCsv,
                DataFormat::Scaled => RatingFormat::ScaledCsv,
            },
            min_ratings_per_user: self.min_ratings as usize,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    /// Users with ids above this form the pool, the rest are test users.
    #[arg(long)]
    pub pool_threshold: Option<u32>,
    /// Pool share of a seeded random split, used when no threshold is given.
    #[arg(long, default_value_t = 0.8)]
    pub pool_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Wk,
    Kt,
    Pearson,
}

impl From<Measure> for MeasureKind {
    fn from(m: Measure) -> Self {
        match m {
            Measure::Wk => MeasureKind::WeightedKappa,
            Measure::Kt => MeasureKind::KendallsTau,
            Measure::Pearson => MeasureKind::PearsonBaseline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    Raw,
    Remap,
}

#[derive(Debug, Args, Serialize)]
pub struct NetworkArgs {
    /// Fewest common movies for a nonzero affinity.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub min_overlap: u64,
    /// Stimulation rate.
    #[arg(long, default_value_t = 0.3)]
    pub k1: f64,
    /// Suppression rate.
    #[arg(long, default_value_t = 0.2)]
    pub k2: f64,
    /// Death rate.
    #[arg(long, default_value_t = 0.1)]
    pub k3: f64,
    /// Antigen concentration y.
    #[arg(long, default_value_t = 1.0)]
    pub antigen_concentration: f64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub population: u64,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    /// Prune antibodies whose concentration falls below this.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    pub initial_concentration: f64,
    /// Iterations of unchanged membership that count as converged.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub stability: u64,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    /// Leave j = i out of the suppression sum.
    #[arg(long)]
    pub no_self_interaction: bool,
    /// Treatment of negative Kendall's Tau / Pearson affinities.
    #[arg(long, value_enum, default_value_t = NegativeMode::Remap)]
    pub negative_affinity: NegativeMode,
}

impl NetworkArgs {
    pub fn params(&self) -> ImmuneParams {
        ImmuneParams {
            k1: self.k1,
            k2: self.k2,
            k3: self.k3,
            antigen_concentration: self.antigen_concentration,
            population_size: self.population as usize,
            dt: self.dt,
            prune_threshold: self.threshold,
            initial_concentration: self.initial_concentration,
            stability_window: self.stability as usize,
            max_iterations: self.max_iterations,
            self_interaction: !self.no_self_interaction,
            negative_affinity: match self.negative_affinity {
                NegativeMode::Raw => NegativeAffinity::Raw,
                NegativeMode::Remap => NegativeAffinity::Remap,
            },
        }
    }

    pub fn measure(&self, kind: Measure) -> AffinityMeasure {
        AffinityMeasure::with_min_overlap(kind.into(), self.min_overlap as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    /// Write the machine-readable result here (plus a `.config.json` sidecar).
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
    /// Defaults to the output file's extension, else JSON.
    #[arg(long, value_enum)]
    pub report_format: Option<ReportFormat>,
}

impl OutputArgs {
    pub fn format(&self) -> ReportFormat {
        self.report_format.unwrap_or_else(|| match &self.output {
            Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => {
                ReportFormat::Csv
            }
            _ => ReportFormat::Json,
        })
    }
}

#[derive(Debug, Args, Serialize)]
pub struct IngestCheckArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AffinityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub min_overlap: u64,
    pub user_a: u32,
    pub user_b: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long, value_enum, default_value_t = Measure::Wk)]
    pub measure: Measure,
    #[arg(long)]
    pub user: u32,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PerTrial,
    Shared,
}

impl From<Mode> for TrialMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::PerTrial => TrialMode::PerTrial,
            Mode::Shared => TrialMode::SharedPopulation,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    /// Number of test users to sample.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub users: u64,
    #[arg(long)]
    pub seed: u64,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct AccuracyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value_t = Measure::Wk)]
    pub measure: Measure,
    /// Predict the pool's mean rating instead of running the network.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, value_enum, default_value_t = Mode::PerTrial)]
    pub mode: Mode,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TiesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Peers sampled per user.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub peers: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Two measures, comma separated.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        num_args = 1,
        default_value = "wk,kt"
    )]
    pub measures: Vec<Measure>,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, value_enum, default_value_t = Mode::PerTrial)]
    pub mode: Mode,
    #[command(flatten)]
    pub out: OutputArgs,
}
