//! `mpseg`: phantom generation, training, prediction and evaluation.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpseg::model::Architecture;

#[derive(Debug, Parser)]
#[command(name = "mpseg", version, about = "Multi-modal brain tumor segmentation pipeline")]
pub struct Cli {
    /// Run data-parallel loops on the calling thread only.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled dataset.
    Phantom(PhantomArgs),
    /// Print an experiment configuration as TOML.
    Config(ConfigArgs),
    /// Train one cross-validation fold.
    Train(TrainArgs),
    /// Segment every case in a directory with one or more checkpoints.
    Predict(PredictArgs),
    /// Compare predictions with reference labels and write CSV reports.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Edge length of the cubic volume.
    #[arg(long, default_value_t = 40)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub tumors: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f32,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    /// Start from the small preset (depth 3, 8 channels, 32³ patches, 50 epochs).
    #[arg(long)]
    pub desk: bool,
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<Architecture>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML experiment configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub scale: ScaleArgs,
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub lr_max: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Checkpoint file; repeat to average an ensemble.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Take window and clean-up settings from this experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cubic sliding-window edge.
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub overlap: Option<f64>,
    /// Apply connected-component clean-up (default).
    #[arg(long, overrides_with = "no_postprocess")]
    pub postprocess: bool,
    #[arg(long, overrides_with = "postprocess")]
    pub no_postprocess: bool,
    #[arg(long)]
    pub min_component: Option<usize>,
    #[arg(long)]
    pub min_enhancing: Option<usize>,
    /// Neighborhood for components: 6, 18 or 26.
    #[arg(long)]
    pub connectivity: Option<u32>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// HD95 when exactly one mask is empty: `diagonal` or a distance in mm.
    #[arg(long, default_value = "diagonal")]
    pub hd_penalty: String,
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    s.parse().map_err(|e: mpseg::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
