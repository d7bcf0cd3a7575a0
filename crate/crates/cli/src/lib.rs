//! Command-line front end for `sdtw-core`.
//!
//! Subcommands: `sdtw` (losses and gradients from files), `gradcheck`,
//! `bench`, `generate` and `barycenter`. Exit codes: 0 success, 1 a check
//! failed, 2 usage, parse or I/O error.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sdtw_core::{BackwardSpace, CostMode};

pub mod bench;
mod commands;
pub mod format;
pub mod generate;
pub mod gradcheck;

pub use commands::run;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "sdtw", version, about = "Batched differentiable Soft-DTW")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Losses (and optionally gradients) for a pair of files or a manifest of pairs.
    Sdtw(SdtwArgs),
    /// Compare analytic input gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Time forward+backward over a configuration matrix and record ledger peaks.
    Bench(BenchArgs),
    /// Write a seeded synthetic dataset.
    Generate(GenerateArgs),
    /// Fit a Soft-DTW barycenter with Adam.
    Barycenter(BarycenterArgs),
}

#[derive(Debug, Clone, Args)]
pub struct AlgoArgs {
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Sakoe-Chiba half-width; 0 disables the band.
    #[arg(long, default_value_t = 0)]
    pub bandwidth: usize,
    /// `fused` or `unfused`.
    #[arg(long, default_value_t = CostMode::Unfused)]
    pub mode: CostMode,
    /// `log` or `linear`.
    #[arg(long, default_value_t = BackwardSpace::Log)]
    pub backward: BackwardSpace,
}

#[derive(Debug, Clone, Args)]
pub struct SdtwArgs {
    /// First series file (with `y`).
    #[arg(required_unless_present = "manifest", requires = "y")]
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    /// Manifest of `x_path,y_path` lines.
    #[arg(long, conflicts_with_all = ["x", "y"])]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub algo: AlgoArgs,
    /// Report `sdtw(x,y) − ½(sdtw(x,x) + sdtw(y,y))`; needs equal lengths.
    #[arg(long)]
    pub normalized: bool,
    /// Directory for binary gradient files `pair_<k>_grad_x.sdtw` / `_grad_y.sdtw`.
    #[arg(long)]
    pub grad: Option<PathBuf>,
    /// Loss CSV path (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    pub sizes: Vec<usize>,
    /// Gammas to check; `--gamma` is an alias.
    #[arg(long, alias = "gamma", value_delimiter = ',', default_value = "0.1,1,10")]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    pub dims: Vec<usize>,
    /// Cost modes to check (default: both).
    #[arg(long, value_delimiter = ',')]
    pub mode: Vec<CostMode>,
    #[arg(long, default_value_t = BackwardSpace::Log)]
    pub backward: BackwardSpace,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Inputs drawn from `[-scale, scale]`.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Report path (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// CSV matrix file; overrides the grid flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "16,32")]
    pub batch: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "128,512")]
    pub length: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub dim: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, value_delimiter = ',', default_value = "unfused,fused")]
    pub mode: Vec<CostMode>,
    #[arg(long, default_value_t = BackwardSpace::Log)]
    pub backward: BackwardSpace,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Refuse tracked allocations beyond this many bytes; failing rows are recorded, not fatal.
    #[arg(long)]
    pub mem_limit: Option<usize>,
    /// Result CSV path (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: generate::Kind,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 128)]
    pub length: usize,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    /// Euclidean mean if every member has the target length, else member 0.
    Auto,
    Mean,
    Member,
}

#[derive(Debug, Clone, Args)]
pub struct BarycenterArgs {
    /// Directory of series files or a file listing one path per line.
    pub input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub bandwidth: usize,
    /// Barycenter length (default: length of the first member).
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Auto)]
    pub init: InitArg,
    /// Member copied by `--init member`.
    #[arg(long, default_value_t = 0)]
    pub member: usize,
    /// Barycenter output (binary for `.sdtw`, text otherwise).
    #[arg(long)]
    pub output: PathBuf,
    /// Objective trace CSV `iteration,objective`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

/// Parses `args` and runs the command, mapping errors to exit codes.
pub fn main_with_args<I, S>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match run(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_USAGE
        }
    }
}
