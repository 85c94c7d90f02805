//! `vslam`: simulate datasets, run the filter, evaluate results.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use vslam_core::pipeline::FrontendMode;
use vslam_core::sim::Pattern;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "vslam", version, about = "Stereo feature-based FastSLAM toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Run the filter on a dataset.
    Run(RunArgs),
    /// Recompute metrics from the outputs of a previous run.
    Eval(EvalArgs),
    /// Extract and match features between two PGM images.
    MatchDemo(MatchDemoArgs),
    /// Run a quick internal consistency suite.
    Selftest,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generator settings as a JSON file or inline JSON object; keys override defaults.
    #[arg(long)]
    pub config: Option<String>,
    /// Number of frames (trajectory steps + 1).
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub landmarks: Option<usize>,
    #[arg(long, value_enum)]
    pub pattern: Option<PatternArg>,
    /// Also render left/right PGM images.
    #[arg(long)]
    pub render: bool,
    /// Multiply the odometry noise (the filter keeps its own model).
    #[arg(long)]
    pub odom_noise_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum PatternArg {
    Loop,
    Lawnmower,
    Straight,
}

impl From<PatternArg> for Pattern {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::Loop => Pattern::Loop,
            PatternArg::Lawnmower => Pattern::Lawnmower,
            PatternArg::Straight => Pattern::Straight,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModeArg {
    Observations,
    Images,
}

impl From<ModeArg> for FrontendMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Observations => FrontendMode::Observations,
            ModeArg::Images => FrontendMode::Images,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Filter seed; defaults to the dataset seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long, value_enum, default_value = "observations")]
    pub mode: ModeArg,
    /// Use the dataset's true correspondences instead of data association.
    #[arg(long)]
    pub oracle_assoc: bool,
    /// Ignore odometry.
    #[arg(long)]
    pub visual_only: bool,
    /// Write a checkpoint every N frames.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint file.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Filter parameters as a JSON file or inline JSON object; keys override defaults.
    #[arg(long)]
    pub config: Option<String>,
    /// Worker threads for particle processing (default: all cores).
    #[arg(long, conflicts_with = "serial")]
    pub threads: Option<usize>,
    /// Process particles sequentially.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory holding trajectory.csv and map.json.
    #[arg(long)]
    pub run: PathBuf,
    /// Output file; defaults to eval.json inside the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct MatchDemoArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    /// Directory for keypoints.csv and matches.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Run(a) => commands::run(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::MatchDemo(a) => commands::match_demo(&a),
        Command::Selftest => commands::selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vslam: error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
