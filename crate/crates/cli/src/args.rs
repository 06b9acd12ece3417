use std::ops::RangeInclusive;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mshc_core::analysis::ThresholdRule;
use mshc_core::datasets::TaskFamily;
use mshc_core::search::DropAggregation;
use mshc_core::{ModelTopology, SearchConfig};

#[derive(Debug, Parser)]
#[command(name = "mshc", version, about = "Minimum sufficient head-circuit search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a minimal-pair corpus as CSV.
    Gen(GenArgs),
    /// Run the circuit search, once or over several trials.
    Search(SearchArgs),
    /// Exact, Hoeffding and Monte-Carlo miss probabilities over a parameter grid.
    Theory(TheoryArgs),
    /// Jaccard overlap of thresholded selection-frequency heatmaps.
    Overlap(OverlapArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub family: TaskFamily,
    /// Number of minimal pairs; the corpus has twice as many rows.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path; the manifest is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleChoice {
    Planted,
    Replay,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlantedModeChoice {
    Law,
    Embeddings,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value_t = OracleChoice::Planted)]
    pub oracle: OracleChoice,
    /// Base URL of the embedding service (remote oracle).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Defaults to "planted" for the planted oracle; required otherwise.
    #[arg(long)]
    pub dataset_id: Option<String>,
    /// Model shape as LAYERSxHEADS, e.g. 20x8.
    #[arg(long)]
    pub topology: Option<ModelTopology>,
    /// Replay directory; defaults to $MSHC_CACHE_DIR.
    #[arg(long)]
    pub replay_dir: Option<PathBuf>,

    #[command(flatten)]
    pub config: ConfigArgs,

    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub planted: PlantedArgs,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 0.75)]
    pub percentile: f64,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0.25, allow_negative_numbers = true)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pruning iteration cap; defaults to 10 times the initial candidate count.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long, default_value = "min")]
    pub drop_aggregation: DropAggregation,
}

impl ConfigArgs {
    pub fn to_config(&self) -> SearchConfig {
        SearchConfig {
            window: self.window,
            percentile: self.percentile,
            samples: self.samples,
            k: self.k,
            epsilon: self.epsilon,
            seed: self.seed,
            max_iterations: self.max_iterations,
            drop_aggregation: self.drop_aggregation,
        }
    }
}

#[derive(Debug, Args)]
pub struct PlantedArgs {
    /// Layers the planted circuit is drawn from, e.g. 7-9.
    #[arg(long, default_value = "7-9", value_parser = parse_layer_range)]
    pub planted_layers: RangeInclusive<usize>,
    #[arg(long, default_value_t = 12)]
    pub planted_count: usize,
    /// Active planted heads at which the planted score saturates.
    #[arg(long, default_value_t = 3)]
    pub planted_saturation: usize,
    #[arg(long, value_enum, default_value_t = PlantedModeChoice::Law)]
    pub planted_mode: PlantedModeChoice,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sd: f64,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Monte-Carlo repetitions per grid cell.
    #[arg(long, default_value_t = 10_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated K values; all grid flags empty selects the default grid.
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub ns: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub delta_i: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub delta_t: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleChoice {
    Frequency,
    TopQuantile,
}

impl From<RuleChoice> for ThresholdRule {
    fn from(r: RuleChoice) -> Self {
        match r {
            RuleChoice::Frequency => ThresholdRule::Frequency,
            RuleChoice::TopQuantile => ThresholdRule::TopQuantile,
        }
    }
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    /// Heatmap CSVs as NAME=PATH or PATH (name taken from the file stem).
    #[arg(required = true, num_args = 2..)]
    pub inputs: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.75, 0.95])]
    pub thresholds: Vec<f64>,
    #[arg(long, value_enum, default_value_t = RuleChoice::Frequency)]
    pub rule: RuleChoice,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_layer_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let (a, b) = s.split_once('-').unwrap_or((s, s));
    let a: usize = a.trim().parse().map_err(|_| format!("bad layer range {s:?}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad layer range {s:?}"))?;
    if a > b {
        return Err(format!("empty layer range {s:?}"));
    }
    Ok(a..=b)
}
