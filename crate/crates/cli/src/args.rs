use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "gnormal", version, about = "G-normal tail capacities, G-heat solver and variance-control simulations")]
pub struct Cli {
    /// Write the run manifest here instead of to stderr.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "subcommand")]
pub enum Command {
    /// One-sided capacity, the two-sided approximation and its error bounds.
    Capacity(CapacityArgs),
    /// Solve the G-heat equation on a grid and dump every retained level.
    Solve(SolveArgs),
    /// Two-sided switching thresholds, one CSV row per retained level.
    Threshold(ThresholdArgs),
    /// Monte Carlo rejection rate of a test against a variance policy.
    Simulate(SimulateArgs),
    /// Check the two-sided sandwich bound on a grid.
    Sandwich(SandwichArgs),
    /// Rejection rates of the optimal adversary for growing n.
    Convergence(ConvergenceArgs),
    /// Re-run every headline number and print a pass/fail table.
    Repro(ReproArgs),
    /// Re-execute a manifest and compare output checksums.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Capacity(_) => "capacity",
            Self::Solve(_) => "solve",
            Self::Threshold(_) => "threshold",
            Self::Simulate(_) => "simulate",
            Self::Sandwich(_) => "sandwich",
            Self::Convergence(_) => "convergence",
            Self::Repro(_) => "repro",
            Self::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct BandArgs {
    #[arg(long)]
    pub sigma_lo: f64,
    #[arg(long)]
    pub sigma_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SidedArg {
    One,
    Two,
}

#[derive(Debug, Args, Serialize)]
pub struct CapacityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub band: BandArgs,
    /// Threshold c.
    #[arg(long, required_unless_present = "alpha", conflicts_with = "alpha")]
    pub c: Option<f64>,
    /// Derive c = sigma_hi * quantile from a test level.
    #[arg(long, requires = "sided")]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub sided: Option<SidedArg>,
    /// Include the error bounds; fails when c <= sigma_hi/2.
    #[arg(long)]
    pub bounds: bool,
    /// Also solve the PDE for p2 on a grid and its refinement.
    #[arg(long)]
    pub pde: bool,
    /// Target grid spacing for --pde.
    #[arg(long, default_value_t = 0.01)]
    pub dx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "path")]
pub enum IcArg {
    OneSided,
    TwoSided,
    Table(PathBuf),
}

impl FromStr for IcArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one-sided" => Ok(Self::OneSided),
            "two-sided" => Ok(Self::TwoSided),
            _ => match s.strip_prefix("table:") {
                Some(p) if !p.is_empty() => Ok(Self::Table(PathBuf::from(p))),
                _ => Err(format!("expected one-sided, two-sided or table:<path>, got '{s}'")),
            },
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub ic: IcArg,
    /// Indicator threshold (ignored for tables).
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub band: BandArgs,
    /// Defaults to -(|c| + 10 sigma_hi).
    #[arg(long, allow_negative_numbers = true)]
    pub x_min: Option<f64>,
    /// Defaults to |c| + 10 sigma_hi.
    #[arg(long, allow_negative_numbers = true)]
    pub x_max: Option<f64>,
    #[arg(long, default_value_t = 2001)]
    pub nx: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = gnormal_core::gheat::DEFAULT_SAFETY)]
    pub safety: f64,
    /// Number of retained time levels after t = 0.
    #[arg(long, default_value_t = gnormal_core::gheat::DEFAULT_LEVELS)]
    pub levels: usize,
    /// CSV destination; the manifest defaults to <out>.manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub alpha: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub band: BandArgs,
    #[arg(long)]
    pub levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    Constant,
    OneSidedOpt,
    TwoSidedThresh,
    HeuristicT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatArg {
    Z,
    T,
}

/// Critical value used inside the heuristic-t rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalArg {
    Normal,
    T,
    Fixed(f64),
}

impl FromStr for CriticalArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(Self::Normal),
            "t" => Ok(Self::T),
            _ => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .map(Self::Fixed)
                .ok_or_else(|| format!("expected normal, t or a positive number, got '{s}'")),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub reps: u64,
    #[arg(long, value_enum)]
    pub policy: PolicyArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub band: BandArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "two")]
    pub sided: SidedArg,
    #[arg(long, value_enum, default_value = "t")]
    pub stat: StatArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "GNORMAL_WORKERS")]
    pub workers: Option<usize>,
    /// Write the statistic histogram as CSV.
    #[arg(long)]
    pub hist: Option<PathBuf>,
    /// Volatility of the constant policy; defaults to sigma_hi.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Reference volatility of the z statistic; defaults to sigma_hi.
    #[arg(long)]
    pub sigma_ref: Option<f64>,
    /// c_alpha of the heuristic-t rule: normal, t, or a number.
    #[arg(long, default_value = "normal")]
    pub critical: CriticalArg,
    /// Include wall-clock runtime in the JSON report.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SandwichArgs {
    #[arg(long)]
    pub c: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub band: BandArgs,
    #[arg(long, default_value_t = 0.04)]
    pub dx: f64,
    #[arg(long, default_value_t = 50)]
    pub levels: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub band: BandArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "one")]
    pub sided: SidedArg,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "GNORMAL_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReproArgs {
    /// Replications for the two heuristic-t rates.
    #[arg(long, default_value_t = 1_000_000)]
    pub sim_reps: u64,
    /// Sample size for the one-sided limit.
    #[arg(long, default_value_t = 10_000)]
    pub limit_n: usize,
    #[arg(long, default_value_t = 100_000)]
    pub limit_reps: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "GNORMAL_WORKERS")]
    pub workers: Option<usize>,
    /// Emit the table as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest_file: PathBuf,
}
