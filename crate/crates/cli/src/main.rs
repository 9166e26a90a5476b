//! `clutterbench`: generate cluttered scenes, synthesize walks, evaluate
//! trajectories and aggregate the results.
//!
//! Exit codes: 0 success, 1 at least one work item failed, 2 configuration
//! error.

mod commands;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "clutterbench", version, about = "Cluttered-scene generation and locomotion benchmarking")]
pub struct Cli {
    /// Base seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log filter, e.g. `info` or `clutterbench_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate navigable scenes and a generation manifest.
    Generate(GenerateArgs),
    /// Re-check navigability and realized density of scene files.
    Verify(VerifyArgs),
    /// Write synthetic walking trajectories.
    SynthWalk(SynthArgs),
    /// Score trajectories against a reference corpus inside a scene.
    Evaluate(EvaluateArgs),
    /// Density distributions, PCA projections and report summaries.
    Analyze(AnalyzeArgs),
    /// Lint embodiment, catalog, scene, trajectory and report files.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum RegimeArg {
    Domestic,
    Debris,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ConnectivityArg {
    Four,
    Eight,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    Flat,
    Crouched,
    SideStep,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, value_enum, default_value = "domestic")]
    pub regime: RegimeArg,
    /// Room type used for catalog eligibility.
    #[arg(long, default_value = "bedroom")]
    pub room_type: String,
    /// Room length and width in meters.
    #[arg(long, num_args = 2, value_names = ["L", "W"], default_values_t = [6.0, 5.0])]
    pub room_size: Vec<f64>,
    /// Fixed target clutterness for every scene.
    #[arg(long, conflicts_with = "clutterness_range")]
    pub clutterness: Option<f64>,
    /// Draw each scene's target uniformly from this range.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub clutterness_range: Option<Vec<f64>>,
    /// Side of the square start and goal zones in meters.
    #[arg(long, default_value_t = 1.0)]
    pub spawn_zone: f64,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub embodiment: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub resolution: f64,
    #[arg(long, value_enum, default_value = "four")]
    pub connectivity: ConnectivityArg,
    /// Fraction of standing height below which obstacles block the floor map.
    #[arg(long, default_value_t = 0.3)]
    pub height_cutoff: f64,
    #[arg(long, default_value_t = 10)]
    pub max_level: u32,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(required = true)]
    pub scenes: Vec<PathBuf>,
    #[arg(long)]
    pub embodiment: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "flat")]
    pub profile: ProfileArg,
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    #[arg(long, default_value_t = 30.0)]
    pub rate: f64,
    /// Number of walks; walk `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    /// Relative phase and amplitude jitter.
    #[arg(long, default_value_t = 0.05)]
    pub perturbation: f64,
    /// Start position; defaults to the scene's start zone or the origin.
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    pub start: Option<Vec<f64>>,
    /// Heading in radians; defaults to facing the scene's goal zone or +x.
    #[arg(long, allow_hyphen_values = true)]
    pub heading: Option<f64>,
    /// Scene whose spawn zones set default start and heading.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub embodiment: Option<PathBuf>,
    /// Write the little-endian binary format instead of text.
    #[arg(long)]
    pub binary: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long = "trajectory", required = true, num_args = 1..)]
    pub trajectories: Vec<PathBuf>,
    #[arg(long)]
    pub embodiment: Option<PathBuf>,
    /// Directory of flat-walking reference trajectories.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Body surface samples per meter.
    #[arg(long, default_value_t = 100.0)]
    pub sample_density: f64,
    #[arg(long, default_value_t = 0.01)]
    pub floor_tolerance: f64,
    /// Covariance ridge relative to the mean diagonal.
    #[arg(long, default_value_t = 1e-8)]
    pub ridge: f64,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Directory of scene files.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Directory holding `evaluation.csv` files from `evaluate`.
    #[arg(long)]
    pub reports: Option<PathBuf>,
    /// Baseline trajectories for PCA.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Dataset trajectories for PCA.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[arg(long)]
    pub embodiment: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Also render SVG figures.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub embodiment: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = EnvFilter::try_new(&cli.log).unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }

    let seed = cli.seed;
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a, seed),
        Command::Verify(a) => commands::verify(a),
        Command::SynthWalk(a) => commands::synth_walk(a, seed),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Validate(a) => commands::validate(a),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("{failed} work item(s) failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
