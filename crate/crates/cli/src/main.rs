//! heightlab: scene generation, slope-aware training, warping, evaluation
//! and rendering for BEV road heightmaps.

mod bundle;
mod colormap;
mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// CLI-level failures with their process exit codes:
/// 2 usage, 3 data/format, 4 numerical guard.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(heightlab_core::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<heightlab_core::Error> for CliError {
    fn from(e: heightlab_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use heightlab_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                E::DegenerateWarp | E::Diverged { .. } | E::DegenerateProjection(_) => 4,
                _ => 3,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "heightlab",
    version,
    about = "Slope-aware BEV heightmap toolbox",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle from a scene spec
    Gen(GenArgs),
    /// Evaluate predicted heightmaps against ground truth
    Eval(EvalArgs),
    /// Warp a heightmap between two frames with ego-motion compensation
    Warp(WarpArgs),
    /// Train the anchor-weight predictor on scene bundles
    Train(TrainArgs),
    /// Render a heightmap to a color-mapped PNG
    Render(RenderArgs),
}

#[derive(Args)]
pub struct GenArgs {
    /// Scene spec JSON
    #[arg(long)]
    spec: PathBuf,
    /// Output bundle directory
    #[arg(long)]
    out: PathBuf,
    /// Override the spec seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Directory of predicted heightmaps (pred_*.hgt, or gt_*.hgt)
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth heightmaps (gt_*.hgt)
    #[arg(long)]
    gt: PathBuf,
    /// Accuracy thresholds in meters, comma separated
    #[arg(long, default_value = "0.05,0.1,0.2")]
    thresholds: String,
    /// Also write the report CSV here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct WarpArgs {
    /// Scene bundle with gt_*.hgt, poses.txt and egomotion.txt
    #[arg(long)]
    gt: PathBuf,
    /// Source and target frame indices as a:b
    #[arg(long)]
    frames: String,
    /// Output directory (warped.hgt, overlap.pgm, manifest.json)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Train config JSON
    #[arg(long)]
    config: PathBuf,
    /// Scene bundle directories
    #[arg(long, required = true, num_args = 1..)]
    scenes: Vec<PathBuf>,
    /// Output directory (params.prm1, trace.csv, report.csv, manifest.json)
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct RenderArgs {
    /// Input HGT1 heightmap
    #[arg(long)]
    heightmap: PathBuf,
    /// Output PNG
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => commands::gen::run(&args),
        Command::Eval(args) => commands::eval::run(&args),
        Command::Warp(args) => commands::warp::run(&args),
        Command::Train(args) => commands::train::run(&args),
        Command::Render(args) => commands::render::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("heightlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
