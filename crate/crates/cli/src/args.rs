use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use phnet_core::models::Depth;
use phnet_core::train::Monitor;

use crate::config::MapPolicy;

#[derive(Debug, Parser)]
#[command(name = "phnet", version, about = "Hypercomplex networks conditioned on attention maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic lesion corpus (PHT1 files plus manifest.csv).
    GenData(GenDataArgs),
    /// Produce attention maps for every manifest record.
    MakeMaps(MakeMapsArgs),
    /// Train a classifier and keep the best-validation checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a manifest.
    Eval(EvalArgs),
    /// Count model parameters.
    Params(ParamsArgs),
    /// Run the numerical self-checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Run config whose `data.synthetic` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<usize>,
    /// Number of samples.
    #[arg(long = "n", alias = "count")]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fidelity: Option<f64>,
    #[arg(long)]
    pub contrast: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub radius_min: Option<f64>,
    #[arg(long)]
    pub radius_max: Option<f64>,
    #[arg(long)]
    pub positive_fraction: Option<f64>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum MapFormat {
    Png,
    Pht,
}

#[derive(Debug, Args)]
pub struct MakeMapsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Trained attention-pool checkpoint.
    #[arg(long, conflicts_with = "train_producer")]
    pub producer: Option<PathBuf>,
    /// Train a producer on the manifest's train/val splits first.
    #[arg(long)]
    pub train_producer: bool,
    /// Where the updated manifest goes (default: `manifest.maps.csv` next to the input).
    #[arg(long)]
    pub output_manifest: Option<PathBuf>,
    /// Map directory, relative to the manifest's directory.
    #[arg(long, default_value = "attention_maps")]
    pub maps_dir: PathBuf,
    #[arg(long, value_enum, default_value = "png")]
    pub format: MapFormat,
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Producer training epochs.
    #[arg(long, default_value_t = 15)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

fn parse_monitor(s: &str) -> Result<Monitor, String> {
    match s {
        "auc" => Ok(Monitor::Auc),
        "accuracy" => Ok(Monitor::Accuracy),
        _ => Err(format!("unknown monitor {s:?} (auc or accuracy)")),
    }
}

/// Flags mirroring run-config keys; a given flag wins over the file.
#[derive(Debug, Default, Args)]
pub struct RunOverrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Use a manifest instead of the config's data source.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub maps: Option<MapPolicy>,
    #[arg(long)]
    pub producer: Option<PathBuf>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub depth: Option<Depth>,
    /// Algebra dimension.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub in_channels: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = parse_monitor)]
    pub monitor: Option<Monitor>,
    #[arg(long)]
    pub no_augment: bool,
    /// Synthetic corpus: map fidelity.
    #[arg(long)]
    pub fidelity: Option<f64>,
    /// Synthetic corpus: sample count.
    #[arg(long)]
    pub count: Option<usize>,
    /// Synthetic corpus: seed (independent of the run seed).
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: RunOverrides,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the corpus written next to the checkpoint by `train`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Defaults to the policy the checkpoint was trained with.
    #[arg(long, value_enum)]
    pub maps: Option<MapPolicy>,
    #[arg(long)]
    pub producer: Option<PathBuf>,
    /// Report directory (default: `eval_<split>` next to the checkpoint).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<Depth>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub in_channels: Option<usize>,
    /// Print the reference table of standard builds instead.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
