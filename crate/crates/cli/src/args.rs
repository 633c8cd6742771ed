//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "op3d",
    version,
    about = "Open-pose 3D zero-shot classification toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rotate every sample of a class-labeled tree into an open-pose copy.
    GenBench(GenBenchArgs),
    /// Project one sample to a PNG.
    Project(ProjectArgs),
    /// Classify one sample.
    Classify(ClassifyArgs),
    /// Classify every sample of an open-pose dataset and write a log.
    Run(RunArgs),
    /// Aggregate a run log into a per-class report.
    Eval(EvalArgs),
    /// Run a grid of scoring configurations over one dataset.
    Sweep(SweepArgs),
    /// Build a reference template bank from canonical samples.
    MakeBank(MakeBankArgs),
    /// Write the synthetic three-shape benchmark.
    Toy(ToyArgs),
}

#[derive(Debug, Args)]
pub struct GenBenchArgs {
    /// Source tree, one directory per class.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "depth")]
    pub style: String,
    #[arg(long, default_value_t = 90.0, allow_negative_numbers = true)]
    pub phi1: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi2: f64,
    /// Camera distance.
    #[arg(long, default_value_t = 2.2)]
    pub rp: f64,
    /// Image side in pixels.
    #[arg(long, default_value_t = 224)]
    pub size: usize,
    #[arg(long, default_value_t = 60.0)]
    pub fov: f64,
    /// Normalize to the unit sphere before projecting.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatcherKind {
    Ref,
    Extern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Diffusion,
    Similarity,
}

/// Options shared by every command that scores images. Unset flags fall
/// back to the config file, then to built-in defaults.
#[derive(Debug, Clone, Args)]
pub struct ScoringArgs {
    /// JSON file with defaults for the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Class list: one `name [canonical_sample]` per line.
    #[arg(long)]
    pub classes: PathBuf,
    #[arg(long, value_enum)]
    pub matcher: Option<MatcherKind>,
    /// Template bank directory for the reference matcher. Without it the
    /// bank is built from the canonical samples in the class list.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// External worker: a command line or tcp://host:port. Falls back to
    /// the OP3D_MATCHER environment variable.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Monte-Carlo trials per score (external diffusion matchers).
    #[arg(long)]
    pub trials: Option<u32>,
    /// Seconds to wait for the worker handshake.
    #[arg(long)]
    pub timeout: Option<f64>,
    /// iarm, single, cube or circular.
    #[arg(long)]
    pub views: Option<String>,
    /// Comma-separated projection styles.
    #[arg(long)]
    pub styles: Option<String>,
    #[arg(long = "R")]
    pub rounds: Option<usize>,
    /// Comma-separated step sizes in degrees, one per round.
    #[arg(long)]
    pub etas: Option<String>,
    /// Finite-difference probe in degrees.
    #[arg(long)]
    pub fd: Option<f64>,
    /// Report the last iterate instead of the best one on the trace.
    #[arg(long)]
    pub last_iterate: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rp: Option<f64>,
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// Write one JSON record per (class, iteration).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Open-pose dataset directory holding manifest.jsonl.
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Restrict to the unseen classes of a benchmark split.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value = "Open-pose classification")]
    pub title: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// JSON grid, e.g. {"styles": ["depth", "render+edge"], "views": ["iarm"]}.
    #[arg(long)]
    pub grid: PathBuf,
    /// Results file, one JSON line per finished cell.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct MakeBankArgs {
    #[arg(long)]
    pub classes: PathBuf,
    #[arg(long, default_value = "depth")]
    pub styles: String,
    #[arg(long, default_value_t = 2.2)]
    pub rp: f64,
    #[arg(long, default_value_t = 224)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub per_class: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}
