mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sltree::splat::BlendMode;

/// Streaming subtree LoD search, group splatting and accelerator simulation.
#[derive(Debug, Parser)]
#[command(name = "sltree", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic LoD scene (and optionally an orbit camera).
    Gen(GenArgs),
    /// Partition a scene into an SLT1 file and report subtree sizes.
    Partition(PartitionArgs),
    /// Run the streaming LoD search and write the cut with workload stats.
    Traverse(TraverseArgs),
    /// Render the cut to a PPM image, with metrics against the reference blender.
    Render(RenderArgs),
    /// Simulate the accelerator end to end and write a JSON/CSV report.
    Simulate(SimulateArgs),
    /// Compare reference and grouped blending, or a saved cut against the oracle.
    Compare(CompareArgs),
    /// Sweep epsilon, subtree size and worker count, writing one CSV row each.
    Sweep(SweepArgs),
    /// Run a command described by a JSON config file.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Reference,
    Grouped,
}

impl From<Mode> for BlendMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Reference => BlendMode::Reference,
            Mode::Grouped => BlendMode::Grouped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Schedule {
    /// Deterministic virtual-time list scheduling.
    Dynamic,
    /// Root subtree on worker 0, top-level groups dealt round-robin.
    Static,
    /// Host threads; the cut is deterministic, per-worker counts are not.
    Threads,
}

/// Output directory shared by every command.
#[derive(Debug, Args)]
pub struct OutArgs {
    /// Directory for written artifacts.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// Scene document (lodscene/1 JSON).
    #[arg(long)]
    pub scene: PathBuf,
}

/// A camera file, or an orbit camera around the scene when none is given.
#[derive(Debug, Args)]
pub struct ViewArgs {
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long, default_value_t = 0.6, allow_negative_numbers = true)]
    pub azimuth: f64,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    pub elevation: f64,
    /// In multiples of the root's 3-sigma radius.
    #[arg(long, default_value_t = 2.0)]
    pub distance: f64,
    /// Square image size in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: u32,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub nodes: usize,
    #[arg(long, default_value_t = 32)]
    pub max_children: usize,
    #[arg(long, default_value_t = 24)]
    pub depth_limit: usize,
    #[arg(long, default_value_t = 0.5)]
    pub shrink: f64,
    /// Also write an orbit camera (see the view flags) to `camera.json`.
    #[arg(long)]
    pub with_camera: bool,
    #[arg(long, default_value_t = 0.6, allow_negative_numbers = true)]
    pub azimuth: f64,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    pub elevation: f64,
    #[arg(long, default_value_t = 2.0)]
    pub distance: f64,
    #[arg(long, default_value_t = 256)]
    pub size: u32,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 32)]
    pub tau: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TraverseArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Use this SLT1 file instead of partitioning the scene.
    #[arg(long)]
    pub sltree: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub tau: usize,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[arg(long, value_enum, default_value_t = Schedule::Dynamic)]
    pub schedule: Schedule,
    #[command(flatten)]
    pub view: ViewArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = Mode::Grouped)]
    pub mode: Mode,
    /// Blend each selected node by its interpolation weight.
    #[arg(long)]
    pub weights: bool,
    #[command(flatten)]
    pub view: ViewArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 32)]
    pub tau: usize,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = Mode::Grouped)]
    pub mode: Mode,
    /// Architecture config JSON; fields not given keep their defaults.
    #[arg(long)]
    pub arch: Option<PathBuf>,
    #[command(flatten)]
    pub view: ViewArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Check a cut written by `traverse` against the reference search.
    #[arg(long)]
    pub oracle: bool,
    /// Cut file to check; defaults to `<out>/cut.json`.
    #[arg(long)]
    pub cut: Option<PathBuf>,
    #[command(flatten)]
    pub view: ViewArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Values as `a,b,c`.
    #[arg(long, default_value = "1")]
    pub epsilon: String,
    /// Values as `a,b,c` or an inclusive range `a..b`.
    #[arg(long, default_value = "32")]
    pub tau: String,
    /// Values as `a,b,c` or an inclusive range `a..b`.
    #[arg(long, default_value = "4")]
    pub workers: String,
    #[arg(long, value_enum, default_value_t = Mode::Grouped)]
    pub mode: Mode,
    #[arg(long)]
    pub arch: Option<PathBuf>,
    #[command(flatten)]
    pub view: ViewArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON object: `command` plus the command's flags as keys.
    #[arg(long)]
    pub config: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SLT_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
