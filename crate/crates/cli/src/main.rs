mod commands;
mod config;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Attention-weighted face-space pipeline: build gaze maps, fit face
/// spaces, run classification experiments, generate synthetic datasets.
#[derive(Parser)]
#[command(name = "eigengaze", version, about)]
struct Cli {
    /// Root seed for all randomness; recorded in every output header
    /// (default 42; for `experiment` the config's seed applies unless this
    /// flag is given).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Experiment config file (read by `experiment`; flags override it).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter gaze CSVs into fixations and build a normalized attention map.
    BuildMap(BuildMapArgs),
    /// Fit a face space (pca, wpca or dpca) from a dataset manifest.
    Fit(FitArgs),
    /// Run the cross-validated component sweep over map conditions.
    Experiment(ExperimentArgs),
    /// Generate the synthetic two-class informative-patch dataset.
    Synth(SynthArgs),
    /// Aggregate a results CSV into per-condition summary statistics.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct BuildMapArgs {
    /// Directory containing one gaze CSV per trial.
    #[arg(long)]
    gaze_dir: PathBuf,
    /// Stimulus width in pixels.
    #[arg(long, default_value_t = 512)]
    width: u32,
    /// Stimulus height in pixels.
    #[arg(long, default_value_t = 512)]
    height: u32,
    /// Output map width (defaults to the stimulus width).
    #[arg(long)]
    target_width: Option<u32>,
    /// Output map height (defaults to the stimulus height).
    #[arg(long)]
    target_height: Option<u32>,
    /// Heat-map Gaussian kernel sigma in pixels.
    #[arg(long, default_value_t = 25.0)]
    sigma: f64,
    /// Fixation merge radius in pixels.
    #[arg(long, default_value_t = 50.0)]
    radius: f64,
    /// Minimum fixation duration in milliseconds.
    #[arg(long, default_value_t = 60.0)]
    min_duration: f64,
    /// Gaze sampling rate in Hz.
    #[arg(long, default_value_t = 300.0)]
    rate: f64,
    /// Fixations dropped at the start of each trial (central-cross bias).
    #[arg(long, default_value_t = 2)]
    skip_first: usize,
    /// Trials with a smaller fraction of valid samples are excluded.
    #[arg(long, default_value_t = 0.25)]
    min_valid: f64,
    /// Normalize each trial's heat map before averaging instead of
    /// summing raw durations across trials.
    #[arg(long)]
    average_per_trial: bool,
    /// Output map file; a .pgm visualization is written alongside.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset manifest CSV.
    #[arg(long)]
    dataset: PathBuf,
    /// pca, wpca or dpca.
    #[arg(long)]
    method: String,
    /// Attention map file (required for wpca/dpca, forbidden for pca).
    #[arg(long)]
    map: Option<PathBuf>,
    /// Number of components to retain.
    #[arg(short = 'm', long = "components")]
    components: usize,
    /// Output face-space file; a .json metadata sidecar is written
    /// alongside.
    #[arg(long)]
    out: PathBuf,
    /// wpca only: additionally verify that a uniform map reproduces the
    /// pca components.
    #[arg(long)]
    verify_uniform: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Image width.
    #[arg(long, default_value_t = 32)]
    width: u32,
    /// Image height.
    #[arg(long, default_value_t = 32)]
    height: u32,
    /// Informative patch as x,y,w,h.
    #[arg(long, default_value = "12,12,8,8")]
    patch: String,
    /// Images per class.
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    /// Class intensity offset inside the patch.
    #[arg(long, default_value_t = 14.0)]
    signal: f64,
    /// Per-pixel noise sigma.
    #[arg(long, default_value_t = 8.0)]
    noise: f64,
    /// Number of coherent background texture rectangles.
    #[arg(long, default_value_t = 24)]
    texture_blobs: usize,
    /// Texture amplitude sigma.
    #[arg(long, default_value_t = 10.0)]
    texture_sigma: f64,
    /// Output directory (images/, manifest.csv, true.map).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Results CSV produced by `experiment`.
    #[arg(long)]
    results: PathBuf,
    /// Pool folds across all component counts.
    #[arg(long)]
    pool_components: bool,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Ok(threads) = std::env::var("EIGENGAZE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 usage error, 2 data error, 3 numerical failure.
fn exit_code(e: &eigengaze::Error) -> u8 {
    if e.is_usage() {
        1
    } else if e.is_numerical() {
        3
    } else {
        2
    }
}

fn run(cli: Cli) -> eigengaze::Result<()> {
    let seed = cli.seed.unwrap_or(42);
    match cli.command {
        Command::BuildMap(args) => commands::build_map::run(args, seed),
        Command::Fit(args) => commands::fit::run(args, seed),
        Command::Experiment(args) => {
            let config_path = cli.config.ok_or_else(|| {
                eigengaze::Error::Usage("experiment requires --config".into())
            })?;
            commands::experiment::run(args, &config_path, cli.seed)
        }
        Command::Synth(args) => commands::synth::run(args, seed),
        Command::Summarize(args) => commands::summarize::run(args),
    }
}
