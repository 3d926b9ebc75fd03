mod commands;
mod io;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hv_core::{EstimatorKind, Variant};

/// Hanurav-Vijayan unequal probability sampling tools.
#[derive(Debug, Parser)]
#[command(name = "hvsample", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select one fixed-size sample.
    Sample(SampleArgs),
    /// First- or second-order inclusion probabilities.
    Probs(ProbsArgs),
    /// HT / CHT estimates (with optional SYG variance) from a sample file.
    Estimate(EstimateArgs),
    /// D1/D2/D3 indicators for a design or along a generated n grid.
    Diagnostics(DiagnosticsArgs),
    /// Generate a synthetic population.
    Generate(GenerateArgs),
    /// Monte-Carlo variance tables.
    Simulate(SimulateArgs),
    /// Exact sample distribution of both variants (small designs only).
    Enumerate(EnumerateArgs),
    /// Re-run a recorded command and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DesignInput {
    /// Design CSV with columns unit_id,pi (or unit_id,x with --pps).
    #[arg(long = "pi", value_name = "CSV")]
    pub pi: PathBuf,
    /// Read sizes `x` and build PPS probabilities for this sample size.
    #[arg(long, value_name = "N")]
    pub pps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Sequential,
    DrawByDraw,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Sequential => Variant::Sequential,
            VariantArg::DrawByDraw => Variant::DrawByDraw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecipeArg {
    Gamma,
    Lognormal,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub design: DesignInput,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    #[arg(long, value_enum, default_value_t = VariantArg::Sequential)]
    pub variant: VariantArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Run manifest path [default: <out>.manifest.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JointArg {
    First,
    Conditional,
    Unconditional,
}

#[derive(Debug, Args)]
pub struct ProbsArgs {
    #[command(flatten)]
    pub design: DesignInput,
    #[arg(long, value_enum, default_value_t = JointArg::First)]
    pub joint: JointArg,
    /// Phase 1 outcome for --joint conditional.
    #[arg(long)]
    pub nprime: Option<usize>,
    /// Warn when an unconditional matrix needs more than this many n*N^2 operations.
    #[arg(long, default_value_t = 50_000_000)]
    pub budget: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Ht,
    Cht,
    Both,
}

impl EstimatorArg {
    pub fn kinds(self) -> Vec<EstimatorKind> {
        match self {
            EstimatorArg::Ht => vec![EstimatorKind::Ht],
            EstimatorArg::Cht => vec![EstimatorKind::Cht],
            EstimatorArg::Both => vec![EstimatorKind::Ht, EstimatorKind::Cht],
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub design: DesignInput,
    /// Sample CSV written by `sample`.
    #[arg(long)]
    pub sample: PathBuf,
    /// Study variable CSV with columns unit_id,y.
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Both)]
    pub estimator: EstimatorArg,
    /// Attach the SYG variance estimate to the CHT record.
    #[arg(long)]
    pub syg: bool,
    /// Seed that produced the sample, echoed into the records.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnosticsArgs {
    /// Design CSV; omit to build a curve from --recipe.
    #[arg(long = "pi", value_name = "CSV", conflicts_with = "recipe")]
    pub pi: Option<PathBuf>,
    #[arg(long, requires = "pi")]
    pub pps: Option<usize>,
    #[arg(long, value_enum)]
    pub recipe: Option<RecipeArg>,
    /// Sample sizes, `start:end:step` or comma separated.
    #[arg(long, default_value = "400:4000:400")]
    pub n_grid: String,
    #[arg(long, default_value_t = 0.2)]
    pub fraction: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub recipe: RecipeArg,
    #[arg(long)]
    pub size: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Population manifest [default: <out>.population.json]
    #[arg(long)]
    pub population_manifest: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub recipe: RecipeArg,
    #[arg(long, default_value = "400:2000:400")]
    pub n_grid: String,
    #[arg(long, default_value_t = 0.2)]
    pub fraction: f64,
    #[arg(long, default_value_t = 10_000)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: u64,
    /// Seed of the generated populations [default: --seed]
    #[arg(long)]
    pub population_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = VariantArg::Sequential)]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Both)]
    pub estimator: EstimatorArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[command(flatten)]
    pub design: DesignInput,
    #[arg(long)]
    pub out: PathBuf,
    /// Verification report [default: <out>.report.json]
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Failures with a dedicated exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Usage(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Usage(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match commands::run(&argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(clap_err) = err.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
                return ExitCode::from(if clap_err.use_stderr() { 2 } else { 0 });
            }
            eprintln!("error: {err:#}");
            match err.downcast_ref::<Failure>() {
                Some(Failure::Usage(_)) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
