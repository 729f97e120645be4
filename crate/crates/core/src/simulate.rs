//! Monte Carlo estimates of type-I error under adversarial variance control.
//!
//! Replication `r` draws its noise from a ChaCha8 stream keyed by
//! `(seed, r)`, so its outcome depends on nothing else. Workers own disjoint
//! replication ranges and only integer tallies are merged, which makes the
//! counts bit-identical for any worker count.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{p1, VolatilityBand};
use crate::error::{domain, Error, Result};
use crate::gheat::two_sided_threshold;
use crate::policy::{next_sigma, CriticalValue, PolicyKind, PolicySpec, PolicyState};
use crate::special_fn::{norm_quantile, t_quantile, Probability};

/// Two-sided 95% normal quantile used for the Wilson interval.
const Z95: f64 = 1.959_963_984_540_054;

pub const HIST_LO: f64 = -6.0;
pub const HIST_HI: f64 = 6.0;
/// Bins of width 0.05 on `[−6, 6)`.
pub const HIST_BINS: usize = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Statistic {
    /// `√n·X̄/σ_ref`.
    Z { sigma_ref: f64 },
    /// `√n·X̄/s` with the unbiased sample variance; `n − 1` degrees of freedom.
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub sided: Sided,
    pub alpha: Probability,
    pub statistic: Statistic,
}

impl TestSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        let a = self.alpha.value();
        if !(a > 0.0 && a <= 0.5) {
            return Err(domain(format!("test level alpha must lie in (0, 0.5], got {a}")));
        }
        match self.statistic {
            Statistic::Z { sigma_ref } if !(sigma_ref > 0.0 && sigma_ref.is_finite()) => {
                Err(domain(format!("z statistic needs sigma_ref > 0, got {sigma_ref}")))
            }
            Statistic::T if n < 2 => Err(Error::Config(format!("t statistic needs n >= 2, got {n}"))),
            _ => Ok(()),
        }
    }

    /// Rejection cut-off for a sample of size `n`.
    pub fn critical_value(&self, n: usize) -> Result<f64> {
        self.validate(n)?;
        let a = self.alpha.value();
        let p = match self.sided {
            Sided::One => 1.0 - a,
            Sided::Two => 1.0 - 0.5 * a,
        };
        match self.statistic {
            Statistic::Z { .. } => norm_quantile(p),
            Statistic::T => t_quantile(p, (n - 1) as u32),
        }
    }

    #[inline]
    pub fn rejects(&self, statistic: f64, critical: f64) -> bool {
        match self.sided {
            Sided::One => statistic > critical,
            Sided::Two => statistic.abs() > critical,
        }
    }
}

/// Noise law of `ε_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    #[default]
    StandardNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n: usize,
    pub reps: u64,
    pub policy: PolicySpec,
    pub test: TestSpec,
    pub noise: Noise,
    pub seed: u64,
    /// Threads used for replications; does not affect the result.
    pub workers: usize,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if self.policy.n() != self.n {
            return Err(Error::Config(format!(
                "policy horizon {} differs from sample size {}",
                self.policy.n(),
                self.n
            )));
        }
        self.test.validate(self.n)
    }

    pub fn echo(&self) -> ConfigEcho {
        let band = self.policy.band();
        let (constant_sigma, critical, table_rows) = match self.policy.kind() {
            PolicyKind::Constant { sigma } => (Some(*sigma), None, None),
            PolicyKind::HeuristicT { critical } => (None, Some(*critical), None),
            PolicyKind::TwoSidedThreshold { table } => (None, None, Some(table.rows.len())),
            PolicyKind::OneSidedOptimal => (None, None, None),
        };
        ConfigEcho {
            n: self.n,
            reps: self.reps,
            seed: self.seed,
            policy: self.policy.kind().name().to_string(),
            policy_alpha: self.policy.alpha().value(),
            constant_sigma,
            critical,
            threshold_rows: table_rows,
            sigma_lo: band.sigma_lo(),
            sigma_hi: band.sigma_hi(),
            test: self.test,
            noise: self.noise,
        }
    }
}

/// Everything needed to rerun a simulation, minus the worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub n: usize,
    pub reps: u64,
    pub seed: u64,
    pub policy: String,
    pub policy_alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical: Option<CriticalValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_rows: Option<usize>,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub test: TestSpec,
    pub noise: Noise,
}

/// Equal-width histogram on `[lo, hi)` with separate under/overflow tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub bins: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self { lo, hi, bins: vec![0; bins], underflow: 0, overflow: 0 }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins.len() as f64
    }

    /// Left edge of bin `k`; `edge(bins.len())` is `hi`.
    pub fn edge(&self, k: usize) -> f64 {
        if k == self.bins.len() {
            self.hi
        } else {
            self.lo + k as f64 * self.width()
        }
    }

    pub fn add(&mut self, v: f64) {
        if v < self.lo {
            self.underflow += 1;
        } else if v >= self.hi {
            self.overflow += 1;
        } else {
            let n = self.bins.len();
            let k = ((v - self.lo) / (self.hi - self.lo) * n as f64) as usize;
            self.bins[k.min(n - 1)] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.underflow + self.overflow + self.bins.iter().sum::<u64>()
    }

    /// Fraction of recorded values below `edge(k)`.
    pub fn ecdf_at_edge(&self, k: usize) -> f64 {
        let below = self.underflow + self.bins[..k].iter().sum::<u64>();
        below as f64 / self.total() as f64
    }

    fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        self
    }

    /// CSV with header `bin_lo,bin_hi,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (k, c) in self.bins.iter().enumerate() {
            out.push_str(&format!("{:?},{:?},{c}\n", self.edge(k), self.edge(k + 1)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub reps: u64,
    pub rejections: u64,
    /// `rejections / (reps − degenerate)`.
    pub rate: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    /// Replications whose statistic was undefined (zero sample variance).
    pub degenerate: u64,
    pub histogram: Histogram,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
    pub config_echo: ConfigEcho,
}

impl SimulationReport {
    /// Replications that produced a statistic.
    pub fn effective_reps(&self) -> u64 {
        self.reps - self.degenerate
    }

    /// `(rate − p)/√(p(1 − p)/N)`: distance from `p` in binomial SDs.
    pub fn sds_from(&self, p: f64) -> f64 {
        (self.rate - p) / (p * (1.0 - p) / self.effective_reps() as f64).sqrt()
    }
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `√n·X̄/s` with divisor `n − 1`.
pub fn t_statistic(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::UndefinedStatistic(format!("need at least two observations, got {}", xs.len())));
    }
    let mut state = PolicyState::new();
    for &x in xs {
        state.observe(x);
    }
    t_from_state(&state)
}

fn t_from_state(state: &PolicyState) -> Result<f64> {
    match state.sample_variance() {
        Some(v) if v > 0.0 => Ok((state.count as f64).sqrt() * state.mean() / v.sqrt()),
        Some(_) => Err(Error::UndefinedStatistic("zero sample variance".into())),
        None => Err(Error::UndefinedStatistic("need at least two observations".into())),
    }
}

/// Outcome of a single replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    /// `None` when the statistic is undefined.
    pub statistic: Option<f64>,
    pub rejected: bool,
}

/// Per-run constants shared by all replications.
struct Engine<'a> {
    config: &'a SimulationConfig,
    key: <ChaCha8Rng as SeedableRng>::Seed,
    critical: f64,
}

impl<'a> Engine<'a> {
    fn new(config: &'a SimulationConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            key: ChaCha8Rng::seed_from_u64(config.seed).get_seed(),
            critical: config.test.critical_value(config.n)?,
        })
    }

    fn replicate(&self, r: u64) -> Result<Replication> {
        let cfg = self.config;
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(r);
        let mut state = PolicyState::new();
        for _ in 0..cfg.n {
            let sigma = next_sigma(&cfg.policy, &state)?;
            let eps: f64 = match cfg.noise {
                Noise::StandardNormal => StandardNormal.sample(&mut rng),
            };
            state.observe(sigma * eps);
        }
        let statistic = match cfg.test.statistic {
            Statistic::Z { sigma_ref } => Some(state.running_sum / ((cfg.n as f64).sqrt() * sigma_ref)),
            Statistic::T => t_from_state(&state).ok(),
        };
        Ok(Replication {
            statistic,
            rejected: statistic.is_some_and(|s| cfg.test.rejects(s, self.critical)),
        })
    }
}

/// Rerun replication `r` of `config` in isolation.
pub fn replicate(config: &SimulationConfig, r: u64) -> Result<Replication> {
    Engine::new(config)?.replicate(r)
}

#[derive(Debug, Clone)]
struct Tally {
    rejections: u64,
    degenerate: u64,
    histogram: Histogram,
}

impl Tally {
    fn new() -> Self {
        Self { rejections: 0, degenerate: 0, histogram: Histogram::new(HIST_LO, HIST_HI, HIST_BINS) }
    }

    fn record(mut self, rep: Replication) -> Self {
        match rep.statistic {
            Some(s) => self.histogram.add(s),
            None => self.degenerate += 1,
        }
        self.rejections += u64::from(rep.rejected);
        self
    }

    fn merge(self, other: Self) -> Self {
        Self {
            rejections: self.rejections + other.rejections,
            degenerate: self.degenerate + other.degenerate,
            histogram: self.histogram.merge(&other.histogram),
        }
    }
}

/// Run all replications and aggregate.
pub fn run(config: &SimulationConfig) -> Result<SimulationReport> {
    let started = Instant::now();
    let engine = Engine::new(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.workers)))?;
    let tally = pool.install(|| {
        (0..config.reps)
            .into_par_iter()
            .try_fold(Tally::new, |t, r| Ok::<_, Error>(t.record(engine.replicate(r)?)))
            .try_reduce(Tally::new, |a, b| Ok(a.merge(b)))
    })?;

    let effective = config.reps - tally.degenerate;
    let rate = if effective == 0 { 0.0 } else { tally.rejections as f64 / effective as f64 };
    let (ci95_lo, ci95_hi) = wilson_interval(tally.rejections, effective, Z95);
    Ok(SimulationReport {
        reps: config.reps,
        rejections: tally.rejections,
        rate,
        ci95_lo,
        ci95_hi,
        degenerate: tally.degenerate,
        histogram: tally.histogram,
        runtime_seconds: Some(started.elapsed().as_secs_f64()),
        config_echo: config.echo(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub reps: u64,
    pub rejections: u64,
    pub rate: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    /// Limiting capacity: `p1(σ̄Φ⁻¹(1 − α))` one-sided, `2 p1(σ̄Φ⁻¹(1 − α/2))`
    /// two-sided.
    pub target: f64,
}

/// Empirical rejection rates of the optimal adversary against a z test with
/// `σ_ref = σ̄`, next to their `n → ∞` limit.
///
/// One-sided runs use [`PolicySpec::one_sided_optimal`]; two-sided runs use
/// the PDE thresholds with one table row per step.
pub fn capacity_convergence(
    band: &VolatilityBand,
    alpha: Probability,
    sided: Sided,
    n_list: &[usize],
    reps: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<ConvergenceRow>> {
    let test = TestSpec { sided, alpha, statistic: Statistic::Z { sigma_ref: band.sigma_hi() } };
    let a = alpha.value();
    let target = match sided {
        Sided::One => p1(band.sigma_hi() * norm_quantile(1.0 - a)?, band)?,
        Sided::Two => 2.0 * p1(band.sigma_hi() * norm_quantile(1.0 - 0.5 * a)?, band)?,
    };
    n_list
        .iter()
        .map(|&n| {
            let policy = match sided {
                Sided::One => PolicySpec::one_sided_optimal(*band, n, alpha)?,
                Sided::Two => PolicySpec::two_sided_threshold(*band, n, alpha, two_sided_threshold(band, alpha, n)?)?,
            };
            let config = SimulationConfig { n, reps, policy, test, noise: Noise::StandardNormal, seed, workers };
            let report = run(&config)?;
            Ok(ConvergenceRow {
                n,
                reps,
                rejections: report.rejections,
                rate: report.rate,
                ci95_lo: report.ci95_lo,
                ci95_hi: report.ci95_hi,
                target,
            })
        })
        .collect()
}
