use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod failure;
mod settings;

#[derive(Parser, Debug)]
#[command(name = "hrnn", version)]
#[command(about = "Hierarchical recurrent network for key-subshot video summarization")]
pub struct Cli {
    /// key = value file supplying defaults for any option; flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random draw (default 0)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Threads for per-video forward passes and evaluation (default 1)
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Options applied to a model at run time (not stored in model files).
#[derive(Args, Debug, Default)]
pub struct RuntimeArgs {
    /// Offset between subshot starts; defaults to the subshot length
    #[arg(long)]
    stride: Option<usize>,

    /// Encode the last subshot over its real frames only
    #[arg(long)]
    masked: bool,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Model variant (see `hrnn train --help`): hrnn, hrnn-single,
    /// flat-single-mean, flat-single-sample, flat-bi-mean, flat-bi-sample
    #[arg(long)]
    variant: Option<String>,

    /// Frames per subshot, s (default 40)
    #[arg(long)]
    subshot_len: Option<usize>,

    /// Layer-1 hidden size, d1 (default 128); also the flat LSTM size
    #[arg(long)]
    hidden1: Option<usize>,

    /// Layer-2 hidden size, d2 (default 128)
    #[arg(long)]
    hidden2: Option<usize>,

    /// Reduced sequence length of the flat variants (default 80)
    #[arg(long)]
    flat_steps: Option<usize>,

    #[command(flatten)]
    runtime: RuntimeArgs,
}

#[derive(Args, Debug, Default)]
pub struct LengthArgs {
    /// Sample or zero-pad every video to this many frames (default 1600;
    /// 0 keeps native lengths)
    #[arg(long)]
    max_frames: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct SelectArgs {
    /// Fraction of subshots kept per video (default 0.15)
    #[arg(long, conflicts_with = "threshold")]
    budget: Option<f64>,

    /// Keep every subshot with key probability above this instead
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model with per-video SGD and write a checkpoint
    Train {
        /// Dataset directory
        #[arg(long)]
        data: PathBuf,

        /// Checkpoint path
        #[arg(long)]
        out: PathBuf,

        /// Metrics log, one `epoch objective` line per epoch
        /// (default: <out>.metrics.txt)
        #[arg(long)]
        metrics: Option<PathBuf>,

        #[command(flatten)]
        model: ModelArgs,

        #[command(flatten)]
        length: LengthArgs,

        /// Step size (default 0.05)
        #[arg(long, visible_alias = "lr")]
        learning_rate: Option<f64>,

        /// Passes over the training split (default 50)
        #[arg(long)]
        epochs: Option<usize>,

        /// Weights start uniform in [-scale, scale] (default 0.08)
        #[arg(long)]
        init_scale: Option<f64>,

        /// Cap on the global gradient norm of each step
        #[arg(long)]
        grad_clip: Option<f64>,

        /// Visit videos in dataset order every epoch
        #[arg(long)]
        no_shuffle: bool,
    },

    /// Score a model on a dataset split and write a TSV report
    Evaluate {
        #[arg(long)]
        model: PathBuf,

        #[arg(long)]
        data: PathBuf,

        /// Report path
        #[arg(long)]
        out: PathBuf,

        /// train, test or all (default test)
        #[arg(long)]
        split: Option<String>,

        #[command(flatten)]
        select: SelectArgs,

        #[command(flatten)]
        length: LengthArgs,

        #[command(flatten)]
        runtime: RuntimeArgs,
    },

    /// Print the selected subshot indices of one video, one per line
    Summarize {
        #[arg(long)]
        model: PathBuf,

        /// Features file (.hrnf)
        #[arg(long)]
        video: PathBuf,

        /// Also write the indices here
        #[arg(long)]
        out: Option<PathBuf>,

        #[command(flatten)]
        select: SelectArgs,

        #[command(flatten)]
        length: LengthArgs,

        #[command(flatten)]
        runtime: RuntimeArgs,
    },

    /// Compare BPTT gradients with central differences on random tiny
    /// instances; exits 0 only if every array is within tolerance
    Gradcheck {
        #[arg(long, default_value = "hrnn")]
        variant: String,

        #[arg(long, default_value_t = 20)]
        instances: u64,

        #[arg(long, default_value_t = 10)]
        frames: usize,

        #[arg(long, default_value_t = 3)]
        feature_dim: usize,

        #[arg(long, default_value_t = 4)]
        hidden1: usize,

        #[arg(long, default_value_t = 3)]
        hidden2: usize,

        #[arg(long, default_value_t = 4)]
        subshot_len: usize,

        #[arg(long, default_value_t = 6)]
        flat_steps: usize,

        #[arg(long, default_value_t = 0.5)]
        init_scale: f64,

        #[arg(long, default_value_t = 1e-6)]
        step: f64,

        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,

        #[command(flatten)]
        runtime: RuntimeArgs,

        /// Perturb the analytic gradient before comparing
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },

    /// Sequential step counts of the hierarchy against one flat LSTM
    Cost {
        /// Frames, T
        frames: usize,

        /// Subshot length, s
        subshot_len: usize,
    },

    /// Write a planted-signal synthetic dataset
    Synth {
        /// Output directory
        #[arg(long)]
        out: PathBuf,

        #[arg(long, default_value_t = 250)]
        videos: usize,

        /// The last N videos form the test split
        #[arg(long, default_value_t = 50)]
        test_videos: usize,

        #[arg(long, default_value_t = 400)]
        frames: usize,

        #[arg(long, default_value_t = 20)]
        subshot_len: usize,

        #[arg(long, default_value_t = 16)]
        feature_dim: usize,

        #[arg(long, default_value_t = 0.2)]
        key_fraction: f64,

        /// Mean offset of key (+) and non-key (-) frames
        #[arg(long, default_value_t = 1.0)]
        signal: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(failure::USAGE)
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
