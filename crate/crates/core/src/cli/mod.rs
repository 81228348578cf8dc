//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 runtime failure.

use std::ffi::OsString;
use std::ops::Range;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

mod commands;

pub use commands::{TrainJob, TRAIN_LOG};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "callosum", version, about = "Axon/myelin segmentation and morphometry for EM mosaics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Worker threads (default: all cores; 1 for `train`).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: Option<u32>,
    /// Overrides the seed in the configuration file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic mosaic with exact ground truth.
    Synth {
        /// Scene-grid TOML.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fine-tune a model on the annotated train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Training job TOML with `[model]`, `[train]` and optional `[regions]`.
        #[arg(long)]
        config: PathBuf,
        /// Training checkpoint to resume, model snapshot to start from, or
        /// promptable-segmentation checkpoint to import the encoder from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Predict the next band of rows for proofreading.
    Expand {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        band_height: u32,
        #[arg(long, default_value_t = 0.5, value_parser = parse_threshold)]
        threshold: f64,
        /// Tile stride in pixels (default: half the model input).
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Commit proofread labels of an exported band into the manifest.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        /// The band's `corrected/` directory.
        #[arg(long)]
        corrected: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// mIoU of a model (or of exported predictions) on a labelled region.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, conflicts_with = "pred_dir", required_unless_present = "pred_dir")]
        snapshot: Option<PathBuf>,
        /// Directory of `pred_<ix>_<iy>.png` label images to score instead of a model.
        #[arg(long)]
        pred_dir: Option<PathBuf>,
        /// Split to score: train, val or test.
        #[arg(long, default_value = "test", conflicts_with = "rows")]
        split: String,
        /// Patch rows `start:end` to score instead of a split.
        #[arg(long, value_parser = parse_rows)]
        rows: Option<Range<u32>>,
        #[arg(long, default_value_t = 0.5, value_parser = parse_threshold)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Slide morphometry: metric grid, six maps, raw table, summary.
    Morpho {
        #[arg(long)]
        manifest: PathBuf,
        /// ROI mask PNG on the metric grid (default: every cell inside).
        #[arg(long)]
        roi: Option<PathBuf>,
        /// Metric-grid TOML.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Re-render distribution maps from a raw metrics table.
    Maps {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 16.0)]
        metric_pixel_nm: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if t > 0.0 && t < 1.0 {
        Ok(t)
    } else {
        Err(format!("threshold {t} outside (0, 1)"))
    }
}

fn parse_rows(s: &str) -> Result<Range<u32>, String> {
    let (a, b) = s.split_once(':').ok_or("expected start:end")?;
    let a: u32 = a.trim().parse().map_err(|_| format!("bad start `{a}`"))?;
    let b: u32 = b.trim().parse().map_err(|_| format!("bad end `{b}`"))?;
    if a >= b {
        return Err(format!("empty row range {a}:{b}"));
    }
    Ok(a..b)
}

/// Failure of a command, classified for the exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(e) if e.is_data_error() => EXIT_DATA,
            CliError::Run(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Train { common, .. }
            | Command::Expand { common, .. }
            | Command::Ingest { common, .. }
            | Command::Eval { common, .. }
            | Command::Morpho { common, .. }
            | Command::Maps { common, .. } => common,
        }
    }
}

/// Runs a parsed command on a thread pool sized by `--workers`, writing
/// human-readable output to `out`. Returns the exit code.
pub fn run(cli: Cli, out: &mut (dyn std::io::Write + Send)) -> i32 {
    let default_workers = match cli.command {
        Command::Train { .. } => 1,
        _ => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let workers = cli.command.common().workers.map_or(default_workers, |w| w as usize);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {workers} workers: {e}");
            return EXIT_RUNTIME;
        }
    };
    match pool.install(|| commands::dispatch(cli.command, out)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (program name first) and runs the command. Help and version
/// requests exit 0; every other parse failure exits 1 before any file is touched.
pub fn main_with_args<I, T>(args: I, out: &mut (dyn std::io::Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli, out),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
