use std::path::PathBuf;
use std::time::Instant;

use gnormal_core::capacity::{self, VolatilityBand};
use gnormal_core::gheat::{self, GridSpec, InitialCondition, P2Numeric, SampledFunction};
use gnormal_core::policy::{CriticalValue, PolicySpec};
use gnormal_core::simulate::{self, Noise, Sided, SimulationConfig, Statistic, TestSpec};
use gnormal_core::special_fn::norm_quantile;
use gnormal_core::{Error, Probability};
use serde::Serialize;

use crate::args::*;
use crate::Failure;

/// Everything a subcommand produced, before anything is written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: Vec<u8>,
    /// `(label, path, bytes)` for each output file.
    pub files: Vec<(String, PathBuf, Vec<u8>)>,
    /// `(label, bytes)` for each input file read.
    pub inputs: Vec<(String, Vec<u8>)>,
    pub seed: Option<u64>,
    /// False when a property check ran and failed.
    pub holds: bool,
    pub manifest_path: Option<PathBuf>,
}

impl Outcome {
    pub fn json<T: Serialize>(value: &T) -> Result<Self, Failure> {
        let mut stdout = serde_json::to_vec_pretty(value).map_err(|e| Failure::internal(e.to_string()))?;
        stdout.push(b'\n');
        Ok(Self { stdout, holds: true, ..Self::default() })
    }
}

pub fn execute(command: &Command) -> Result<Outcome, Failure> {
    match command {
        Command::Capacity(a) => capacity(a),
        Command::Solve(a) => solve(a),
        Command::Threshold(a) => threshold(a),
        Command::Simulate(a) => simulate(a),
        Command::Sandwich(a) => sandwich(a),
        Command::Convergence(a) => convergence(a),
        Command::Repro(a) => crate::repro::run(a),
        Command::Replay(_) => Err(Failure::usage("replay cannot be nested")),
    }
}

pub fn band(b: &BandArgs) -> Result<VolatilityBand, Error> {
    VolatilityBand::new(b.sigma_lo, b.sigma_hi)
}

pub fn workers(requested: Option<usize>) -> usize {
    requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn sided(s: SidedArg) -> Sided {
    match s {
        SidedArg::One => Sided::One,
        SidedArg::Two => Sided::Two,
    }
}

#[derive(Serialize)]
struct Bounds {
    two_sided_error_bound: f64,
    absolute_error_bound: f64,
    relative_error_bound: f64,
    relative_error_bound_exact_denominator: f64,
    asymptotic_relative_error: f64,
}

#[derive(Serialize)]
struct CapacityReport {
    sigma_lo: f64,
    sigma_hi: f64,
    c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sided: Option<SidedArg>,
    p1: f64,
    /// `2 p1(c)`; null outside `c > σ̄/2`.
    p2_approx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<Bounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p2_numeric: Option<P2Numeric>,
}

fn capacity(a: &CapacityArgs) -> Result<Outcome, Failure> {
    let band = band(&a.band)?;
    let c = match (a.c, a.alpha, a.sided) {
        (Some(c), _, _) => c,
        (None, Some(alpha), Some(s)) => {
            let alpha = Probability::new(alpha)?.value();
            let p = match s {
                SidedArg::One => 1.0 - alpha,
                SidedArg::Two => 1.0 - 0.5 * alpha,
            };
            band.sigma_hi() * norm_quantile(p)?
        }
        _ => return Err(Failure::usage("give --c, or --alpha with --sided")),
    };
    let p1 = capacity::p1(c, &band)?;
    let approx = match capacity::p2_approx(c, &band) {
        Ok(p) => Some(p),
        Err(Error::Precondition(_)) if !a.bounds => None,
        Err(e) => return Err(e.into()),
    };
    let bounds = match approx {
        Some(p) if a.bounds => Some(Bounds {
            two_sided_error_bound: p.absolute_error_bound,
            absolute_error_bound: capacity::absolute_error_bound(c, 1.0, &band)?,
            relative_error_bound: p.relative_error_bound,
            relative_error_bound_exact_denominator: p.relative_error_bound_exact_denominator,
            asymptotic_relative_error: capacity::asymptotic_relative_error(c, &band)?,
        }),
        _ => None,
    };
    let p2_numeric = if a.pde {
        let grid = GridSpec::aligned(c, c + 10.0 * band.sigma_hi(), a.dx, 1.0)?;
        Some(gheat::p2_numeric_with_diagnostics(c, &band, &grid)?)
    } else {
        None
    };
    Outcome::json(&CapacityReport {
        sigma_lo: band.sigma_lo(),
        sigma_hi: band.sigma_hi(),
        c,
        alpha: a.alpha,
        sided: a.sided,
        p1,
        p2_approx: approx.map(|p| p.value),
        bounds,
        p2_numeric,
    })
}

#[derive(Serialize)]
struct SolveReport<'a> {
    ic: &'a InitialCondition,
    band: VolatilityBand,
    grid: GridSpec,
    dx: f64,
    dt: f64,
    steps: usize,
    /// `u(t_end, 0)`, null when 0 is off the grid.
    value_at_origin: Option<f64>,
    /// Sup-norm error against the closed form at `t_end` (one-sided only).
    closed_form_sup_error: Option<f64>,
    out: &'a PathBuf,
}

fn solve(a: &SolveArgs) -> Result<Outcome, Failure> {
    let band = VolatilityBand::with_zero_floor(a.band.sigma_lo, a.band.sigma_hi)?;
    let mut inputs = Vec::new();
    let ic = match &a.ic {
        IcArg::OneSided => InitialCondition::IndicatorAbove { c: a.c },
        IcArg::TwoSided => InitialCondition::IndicatorAbsAbove { c: a.c },
        IcArg::Table(path) => {
            let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| Failure::usage(format!("{} is not UTF-8", path.display())))?;
            inputs.push((format!("table:{}", path.display()), bytes));
            InitialCondition::Table(SampledFunction::parse_csv(&text)?)
        }
    };
    let half = a.c.abs() + 10.0 * band.sigma_hi();
    let grid = GridSpec::new(a.x_min.unwrap_or(-half), a.x_max.unwrap_or(half), a.nx, a.t_end, a.safety)?
        .with_levels(a.levels)?;
    let sol = gheat::solve(&ic, &band, &grid)?;
    let last = sol.n_levels() - 1;
    let value_at_origin = if grid.x_min <= 0.0 && 0.0 <= grid.x_max { sol.value_at(last, 0.0).ok() } else { None };

    let mut csv = Vec::new();
    sol.write_csv(&mut csv).map_err(|e| Failure::io(&a.out, e))?;
    let mut outcome = Outcome::json(&SolveReport {
        ic: &ic,
        band,
        grid,
        dx: grid.dx(),
        dt: sol.dt,
        steps: sol.steps,
        value_at_origin,
        closed_form_sup_error: sol.closed_form_error(last),
        out: &a.out,
    })?;
    outcome.files.push(("out".into(), a.out.clone(), csv));
    outcome.inputs = inputs;
    let mut manifest = a.out.clone().into_os_string();
    manifest.push(".manifest.json");
    outcome.manifest_path = Some(manifest.into());
    Ok(outcome)
}

fn threshold(a: &ThresholdArgs) -> Result<Outcome, Failure> {
    let band = band(&a.band)?;
    let table = gheat::two_sided_threshold(&band, Probability::new(a.alpha)?, a.levels)?;
    let mut out = String::from("time_remaining,threshold,flag\n");
    for r in &table.rows {
        out.push_str(&format!("{:?},{:?},{}\n", r.time_remaining, r.threshold, r.flag));
    }
    Ok(Outcome { stdout: out.into_bytes(), holds: true, ..Outcome::default() })
}

pub fn simulation_config(a: &SimulateArgs) -> Result<SimulationConfig, Failure> {
    let band = band(&a.band)?;
    let alpha = Probability::new(a.alpha)?;
    let policy = match a.policy {
        PolicyArg::Constant => PolicySpec::constant(band, a.n, a.sigma.unwrap_or(band.sigma_hi()))?,
        PolicyArg::OneSidedOpt => PolicySpec::one_sided_optimal(band, a.n, alpha)?,
        PolicyArg::TwoSidedThresh => {
            PolicySpec::two_sided_threshold(band, a.n, alpha, gheat::two_sided_threshold(&band, alpha, a.n)?)?
        }
        PolicyArg::HeuristicT => {
            let critical = match a.critical {
                CriticalArg::Normal => CriticalValue::Normal,
                CriticalArg::T => CriticalValue::StudentByStep,
                CriticalArg::Fixed(v) => CriticalValue::Fixed(v),
            };
            PolicySpec::heuristic_t(band, a.n, alpha, critical)?
        }
    };
    let statistic = match a.stat {
        StatArg::Z => Statistic::Z { sigma_ref: a.sigma_ref.unwrap_or(band.sigma_hi()) },
        StatArg::T => Statistic::T,
    };
    Ok(SimulationConfig {
        n: a.n,
        reps: a.reps,
        policy,
        test: TestSpec { sided: sided(a.sided), alpha, statistic },
        noise: Noise::StandardNormal,
        seed: a.seed,
        workers: workers(a.workers),
    })
}

fn simulate(a: &SimulateArgs) -> Result<Outcome, Failure> {
    let config = simulation_config(a)?;
    let start = Instant::now();
    let mut report = simulate::run(&config)?;
    let secs = start.elapsed().as_secs_f64();
    eprintln!("simulate: {} reps on {} workers in {secs:.3}s", config.reps, config.workers);
    if !a.timing {
        report.runtime_seconds = None;
    }
    let mut outcome = Outcome::json(&report)?;
    outcome.seed = Some(a.seed);
    if let Some(path) = &a.hist {
        outcome.files.push(("hist".into(), path.clone(), report.histogram.to_csv().into_bytes()));
    }
    Ok(outcome)
}

fn sandwich(a: &SandwichArgs) -> Result<Outcome, Failure> {
    let band = band(&a.band)?;
    let grid = GridSpec::aligned(a.c, a.c + 10.0 * band.sigma_hi(), a.dx, a.t_end)?.with_levels(a.levels)?;
    let report = gheat::verify_sandwich(a.c, &band, &grid)?;
    let mut outcome = Outcome::json(&report)?;
    outcome.holds = report.holds;
    Ok(outcome)
}

fn convergence(a: &ConvergenceArgs) -> Result<Outcome, Failure> {
    let band = band(&a.band)?;
    let rows = simulate::capacity_convergence(
        &band,
        Probability::new(a.alpha)?,
        sided(a.sided),
        &a.n_list,
        a.reps,
        a.seed,
        workers(a.workers),
    )?;
    let mut outcome = Outcome::json(&rows)?;
    outcome.seed = Some(a.seed);
    Ok(outcome)
}
