//! Command-line schema. Every flag can also come from a `key=value` config
//! file whose keys are the long flag names.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "motionattn", version, about = "Motion-attention pose forecasting", args_override_self = true)]
pub struct Cli {
    /// `key=value` file with defaults for the command's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic pose sequences.
    GenData(GenDataArgs),
    /// Train a forecaster (one model, or several levels plus post-fusion).
    Train(TrainArgs),
    /// Train a post-fusion network on top of frozen base checkpoints.
    TrainFusion(TrainFusionArgs),
    /// Forecast the frames following a history.
    Predict(PredictArgs),
    /// Error tables at fixed horizons, optionally under input noise.
    Eval(EvalArgs),
    /// Dump attention maps and trajectories of a recursive forecast.
    AttnExport(AttnExportArgs),
    /// Run the DCT, gradient and attention self-checks.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// periodic, triangle or repeat.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub period: Option<usize>,
    /// Inclusive period range for triangle waves, `lo,hi`.
    #[arg(long)]
    pub periods: Option<String>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub joints: Option<usize>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub motif: Option<usize>,
    #[arg(long)]
    pub gap: Option<usize>,
    /// Number of sequences; above one, `--out` is a directory.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    /// Pose files or directories of `.pose` files, comma-separated.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long = "val-data")]
    pub val_data: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelArgs {
    /// One level, or several comma-separated with `--fusion`.
    #[arg(long)]
    pub level: Option<String>,
    #[arg(long = "part-map")]
    pub part_map: Option<PathBuf>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long = "T")]
    pub t: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "F")]
    pub f: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long = "n-keep")]
    pub n_keep: Option<usize>,
    /// motion or frame-wise.
    #[arg(long)]
    pub mode: Option<String>,
    /// concat, pre or post.
    #[arg(long)]
    pub fusion: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct OptimArgs {
    /// mpjpe or angle-l1; defaults to the one matching the data.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long = "squared-loss")]
    pub squared_loss: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs per tenfold learning-rate drop.
    #[arg(long = "lr-decay-epochs")]
    pub lr_decay_epochs: Option<f64>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Epochs of the fusion stage when `--fusion post`.
    #[arg(long = "fusion-epochs")]
    pub fusion_epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainFusionArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Base checkpoints, comma-separated.
    #[arg(long)]
    pub ckpt: Option<String>,
    /// Only `post` is trained here.
    #[arg(long)]
    pub fusion: Option<String>,
    #[arg(long = "F")]
    pub f: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// History length; the last `N` frames of the file are used.
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Milliseconds, comma-separated.
    #[arg(long)]
    pub horizons: Option<String>,
    /// Noise levels, comma-separated and ascending; switches to a noise sweep.
    #[arg(long)]
    pub sigmas: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttnExportArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Coordinates written to the trajectory dump.
    #[arg(long)]
    pub coords: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
}
