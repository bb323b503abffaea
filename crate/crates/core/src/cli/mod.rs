//! Command-line front end: `gen`, `milp`, `train`, `eval`, `bench` and
//! `bound`.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when the solver
//! or a trainer fails. Every output file is written to a temporary sibling
//! and renamed into place.

mod commands;
mod config;

pub use config::{DataSection, EvalSection, ExperimentConfig, Preset};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

/// Environment variable consulted for the seed when neither a flag nor the
/// config sets one.
pub const SEED_ENV: &str = "DEFERLAB_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "deferlab",
    version,
    about = "Learn when a classifier should defer to a human"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/val/test CSVs for a synthetic or grouped-expert instance.
    Gen(GenArgs),
    /// Solve the mixed-integer program for a halfspace classifier and rejector.
    Milp(MilpArgs),
    /// Train a surrogate or baseline system.
    Train(TrainArgs),
    /// Evaluate a pair or trained system on a dataset.
    Eval(EvalArgs),
    /// Run methods over repeated trials and report mean ± standard error.
    Bench(BenchArgs),
    /// Print the generalization bound for halfspace pairs.
    Bound(BoundArgs),
}

#[derive(Debug, Args, Default)]
pub struct DataFlags {
    /// synthetic | grouped | csv
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long = "d")]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Experts are perfect on the first K classes (grouped preset).
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Number of classes (grouped preset).
    #[arg(long = "C")]
    pub classes: Option<usize>,
    /// mixture | uniform
    #[arg(long)]
    pub distribution: Option<String>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub p_m: Option<f64>,
    #[arg(long)]
    pub p_h0: Option<f64>,
    #[arg(long)]
    pub p_h1: Option<f64>,
    #[arg(long)]
    pub test_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for train.csv, val.csv, test.csv and run.cfg.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MilpArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training CSV (`x0,...,y,h`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "box")]
    pub box_bound: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Upper bound on the deferral rate.
    #[arg(long)]
    pub coverage: Option<f64>,
    /// File with one group id per training point.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Seconds; `0` disables the limit.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for pair.txt, solution.txt and run.cfg.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Validation CSV; without it `val_fraction` of `--data` is held out.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// rs, rs_alpha:<a>, rs2, ce, ce:<a>, ova, moe, confidence, selective, triage
    #[arg(long)]
    pub method: Option<String>,
    /// Fixes alpha instead of searching the grid.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated alpha values to search.
    #[arg(long)]
    pub alpha_grid: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// linear | hidden:<units>
    #[arg(long)]
    pub architecture: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for model.txt and run.cfg.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// A pair file from `milp` or a model file from `train`.
    #[arg(long, conflicts_with_all = ["defer_all", "defer_none"])]
    pub model: Option<PathBuf>,
    /// Evaluate the system that defers every point.
    #[arg(long, conflicts_with = "defer_none")]
    pub defer_all: bool,
    /// Evaluate a constant classifier that never defers.
    #[arg(long)]
    pub defer_none: bool,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub grid_size: usize,
    /// Directory for report.csv, curve.csv and curve.svg.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataFlags,
    /// Dataset CSV for the csv preset.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Comma-separated method ids; `milp` selects the exact solver.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads for trials.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub km: f64,
    #[arg(long)]
    pub kr: f64,
    /// Human error rate.
    #[arg(long)]
    pub perr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub train_loss: f64,
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Solver(_) | Error::Diverged(_) | Error::Internal(_) => 2,
        _ => 1,
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
