//! Command-line front end. Every subcommand reads and writes the library's
//! file formats and records a `manifest.json` with the resolved settings and
//! the SHA-256 of every input and output.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;

pub use manifest::{hash_file, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "aperture", version, about = "Window-state modeling toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic population: indoor.csv, weather.csv, ground_truth.csv.
    Synth(SynthArgs),
    /// Join, resample and impute raw CSVs into scaled samples.csv.
    Ingest(IngestArgs),
    /// Office statistics, Ward clustering and t-SNE projection.
    Segment(SegmentArgs),
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Grid or random hyperparameter search.
    Search(SearchArgs),
    /// Retrain one configuration under many seeds.
    SeedStudy(SeedStudyArgs),
    /// Score a checkpoint on labeled samples.
    Evaluate(EvaluateArgs),
    /// Continue training a checkpoint on a new building.
    Adapt(AdaptArgs),
    /// Closed-loop zone simulation driven by a checkpoint.
    Cosim(CosimArgs),
    /// Answer the line protocol on stdio or TCP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// TOML generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub offices: Option<usize>,
    #[arg(long)]
    pub days: Option<u32>,
    /// Indoor cadence in minutes (1, 10 or 15).
    #[arg(long)]
    pub cadence: Option<u32>,
    /// Label flip probability.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub indoor: PathBuf,
    #[arg(long)]
    pub weather: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML feature schema; the canonical schema when omitted.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// TOML imputation rules.
    #[arg(long, conflicts_with = "sparse_defaults")]
    pub impute: Option<PathBuf>,
    /// Use the built-in fill-ins for sparse buildings.
    #[arg(long)]
    pub sparse_defaults: bool,
    /// Keep only these offices (comma separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "exclude")]
    pub offices: Vec<String>,
    /// Drop these offices (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    /// Resample the indoor data to this cadence in minutes.
    #[arg(long)]
    pub resample_to: Option<u32>,
    /// Source cadence in minutes; inferred from the data when omitted.
    #[arg(long, requires = "resample_to")]
    pub source_cadence: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub indoor: PathBuf,
    /// Weather data; when given, the station temperature splits cold and warm points.
    #[arg(long)]
    pub weather: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML segmentation settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cut the dendrogram at exactly this many clusters.
    #[arg(long, conflicts_with_all = ["cutoff", "coverage"])]
    pub clusters: Option<usize>,
    /// Cut the dendrogram at this merge distance.
    #[arg(long, conflicts_with = "coverage")]
    pub cutoff: Option<f64>,
    /// Finest cut whose largest clusters hold this fraction of offices.
    #[arg(long)]
    pub coverage: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<usize>,
    #[arg(long)]
    pub activation: Option<ActivationArg>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l1: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub iterations: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory, or a checkpoint path ending in `.ckpt`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// TOML model and training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds both weight initialization and minibatch shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum, Default)]
pub enum SearchMode {
    Grid,
    #[default]
    Random,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// TOML search space.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel trials; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, value_enum, default_value_t = SearchMode::Random)]
    pub mode: SearchMode,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Iterations per trial.
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Skip retraining the winner.
    #[arg(long)]
    pub no_retrain: bool,
}

#[derive(Debug, Args)]
pub struct SeedStudyArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// First seed; the study uses consecutive seeds from here.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Sampling cadence in minutes; inferred from the timestamps when omitted.
    #[arg(long)]
    pub cadence: Option<u32>,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Samples of the new building.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Leading samples per office used for adaptation; the rest evaluate.
    #[arg(long)]
    pub n_adapt: usize,
    /// TOML adaptation plan.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Minibatch shuffle seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step_iterations: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Continue from the checkpoint's Adagrad accumulators.
    #[arg(long)]
    pub carry_optimizer: bool,
}

#[derive(Debug, Args)]
pub struct CosimArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub weather: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML zone and occupancy settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// TOML imputation rules; the sparse-building fill-ins when omitted.
    #[arg(long)]
    pub impute: Option<PathBuf>,
    /// Simulate only the first N days of the weather file.
    #[arg(long)]
    pub days: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Listen on this address instead of stdio.
    #[arg(long)]
    pub tcp: Option<String>,
    #[arg(long)]
    pub impute: Option<PathBuf>,
    /// Local time offset in minutes used for hour and weekday features.
    #[arg(long, default_value_t = 60, allow_negative_numbers = true)]
    pub utc_offset: i32,
    /// Directory for the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("APERTURE_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Exit code for a library error: configuration problems are usage errors,
/// everything else is a data error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e}");
            exit_code(&e)
        }
    }
}
