use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "tempokey", version, about = "Tempo and key estimation with directional CNNs")]
pub struct Cli {
    /// TOML file with defaults for any flag; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (WAV files plus manifest.csv).
    Synth(SynthArgs),
    /// Compute and cache the spectrograms of a manifest.
    Preprocess(PreprocessArgs),
    /// Train a grid of configurations and write weights and a JSONL report.
    Train(TrainArgs),
    /// Score a trained model on a manifest.
    Evaluate(EvaluateArgs),
    /// Predict tempo or key for tracks.
    Predict(PredictArgs),
    /// Print the parameter count of an architecture.
    Params(ParamsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Clip length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub bpm_min: Option<u32>,
    #[arg(long)]
    pub bpm_max: Option<u32>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub task: Option<String>,
    /// One or more architectures, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub arch: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub dropout: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Output directory for report.jsonl, summary.json and weights.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Maximum number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub long_filter_len: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Seed of the train/validation/test split (defaults to --seed).
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Expected task; refused if the weights were trained for the other one.
    #[arg(long)]
    pub task: Option<String>,
    /// Directory for metrics.json and predictions.csv; metrics go to stdout
    /// when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    /// CSV output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Audio files to predict, in addition to any manifest entries.
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub long_filter_len: Option<usize>,
}
