//! `lzsc`: sparse-coding image fusion toolkit.
//!
//! Subcommands: fuse, features, decompose, train, metrics, solve.
//! Exit codes: 0 success, 1 internal error, 2 user/input error.

mod commands;
mod errors;
mod imgio;
mod solve;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "lzsc", version, about = "l0-regularized sparse-coding image fusion")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fuse two aligned source images (or two directories of them).
    Fuse(FuseArgs),
    /// Run fusion and dump the intermediate features and parts.
    Features(FeaturesArgs),
    /// Decompose a fused image back into source estimates.
    Decompose(DecomposeArgs),
    /// Train the fusion networks on a directory of aligned pairs.
    Train(TrainArgs),
    /// Score a fused image against its sources (JSON to stdout).
    Metrics(MetricsArgs),
    /// Run a classical sparse-coding solver on a JSON problem spec.
    Solve(SolveArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ColorMode {
    /// Grayscale pipeline; RGB inputs are converted via BT.601 luma.
    Gray,
    /// Fuse luma and carry chroma from the color-bearing source.
    Ycbcr,
}

#[derive(Args)]
pub struct FuseArgs {
    /// First modality image (or directory).
    #[arg(long)]
    m1: PathBuf,
    /// Second modality image (or directory).
    #[arg(long)]
    m2: PathBuf,
    /// Weight archive produced by `lzsc train`.
    #[arg(long)]
    weights: PathBuf,
    /// Output image (or directory in directory mode).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "gray")]
    color: ColorMode,
    /// Directory for intermediate-feature dumps.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Center-crop both sources to their common size instead of failing
    /// on a size mismatch.
    #[arg(long)]
    resize_to_min: bool,
}

#[derive(Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    m1: PathBuf,
    #[arg(long)]
    m2: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Directory receiving the 14 dump files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct DecomposeArgs {
    /// Fused image to invert.
    #[arg(long)]
    fused: PathBuf,
    /// Weight archive containing the inverse-fusion network.
    #[arg(long)]
    weights: PathBuf,
    /// Output directory for the two source estimates.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset root containing aligned pairs as m1/NAME and m2/NAME.
    #[arg(long)]
    data: PathBuf,
    /// Training stage: 1, 2, or both.
    #[arg(long, default_value = "both")]
    stage: String,
    /// Output weight archive.
    #[arg(long)]
    out: PathBuf,
    /// Resume from an existing archive (the usual starting state for
    /// stage 2; omitting it there reproduces the no-stage-I ablation).
    #[arg(long)]
    init_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    iters: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 128)]
    crop: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Stage-II loss weights.
    #[arg(long, default_value_t = 20.0)]
    beta1: f64,
    #[arg(long, default_value_t = 20.0)]
    beta2: f64,
    #[arg(long, default_value_t = 15.0)]
    beta3: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature channels K of a freshly initialized network.
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Convolution kernel size of a freshly initialized network.
    #[arg(long, default_value_t = 5)]
    kernel: usize,
    /// Iteration modules per block of a freshly initialized network.
    #[arg(long, default_value_t = 4)]
    ims: usize,
    /// Checkpoint every N iterations (0 disables).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Loss log path prefix; defaults to the output path.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct MetricsArgs {
    #[arg(long)]
    fused: PathBuf,
    #[arg(long)]
    src1: PathBuf,
    #[arg(long)]
    src2: PathBuf,
}

#[derive(Args)]
pub struct SolveArgs {
    /// Solver: exhaustive, nihta, ista, or nihta-conv.
    #[arg(long)]
    mode: String,
    /// Path to the JSON problem spec.
    #[arg(long)]
    spec: PathBuf,
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("LZSC_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() {
    init_thread_pool();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Fuse(a) => commands::fuse(a),
        Cmd::Features(a) => commands::features(a),
        Cmd::Decompose(a) => commands::decompose(a),
        Cmd::Train(a) => commands::train(a),
        Cmd::Metrics(a) => commands::metrics(a),
        Cmd::Solve(a) => match solve::run(&a.mode, &a.spec) {
            Ok(report) => {
                println!("{}", serde_json::to_string_pretty(&report).unwrap());
                Ok(())
            }
            Err(e) => Err(e),
        },
    };
    if let Err(e) = result {
        eprintln!("error: {}", e);
        std::process::exit(e.exit_code());
    }
}
