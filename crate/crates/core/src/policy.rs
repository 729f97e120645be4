//! Variance-control rules of an adversarial experimenter.
//!
//! At step `i` the experimenter picks `σ_i ∈ [σ̲, σ̄]` from the observations
//! `X_1, …, X_{i−1}` only, then observes `X_i = σ_i ε_i`. Every non-constant
//! rule here is bang-bang: it returns `σ̄` while the running sum looks
//! "not yet significant" and `σ̲` otherwise.

use serde::{Deserialize, Serialize};

use crate::capacity::{profile_f_yy, VolatilityBand};
use crate::error::{domain, Error, Result};
use crate::gheat::ThresholdTable;
use crate::special_fn::{norm_quantile, t_quantile, Probability};

/// Critical value `c_α` used inside the heuristic t rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum CriticalValue {
    /// `Φ⁻¹(1 − α/2)`.
    Normal,
    /// `t_{i−2}⁻¹(1 − α/2)`, matching the degrees of freedom of `s²_{i−1}`.
    StudentByStep,
    Fixed(f64),
}

/// Which rule to apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PolicyKind {
    Constant { sigma: f64 },
    /// `σ̄` iff `S_{i−1}/√n ≤ σ̄·Φ⁻¹(1 − α)`.
    OneSidedOptimal,
    /// `σ̄` iff `|S_{i−1}|/√n ≤ threshold(1 − (i−1)/n)`.
    TwoSidedThreshold { table: ThresholdTable },
    /// `σ̄` iff `|S_{i−1}|/√(n·s²_{i−1}) ≤ c_α`.
    HeuristicT { critical: CriticalValue },
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::OneSidedOptimal => "one-sided-opt",
            Self::TwoSidedThreshold { .. } => "two-sided-thresh",
            Self::HeuristicT { .. } => "heuristic-t",
        }
    }
}

/// An immutable rule for a horizon of `n` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    kind: PolicyKind,
    band: VolatilityBand,
    n: usize,
    alpha: Probability,
    /// Switching level per step, indexed by `i` (entry 0 unused). A single
    /// entry when the level does not depend on `i`.
    cuts: Vec<f64>,
}

fn check_alpha(alpha: Probability) -> Result<()> {
    let a = alpha.value();
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("alpha must lie in (0, 1), got {a}")))
    }
}

fn check_horizon(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("policy horizon n must be >= 1".into()));
    }
    Ok(())
}

impl PolicySpec {
    pub fn constant(band: VolatilityBand, n: usize, sigma: f64) -> Result<Self> {
        check_horizon(n)?;
        if !(sigma >= band.sigma_lo() && sigma <= band.sigma_hi()) {
            return Err(domain(format!(
                "constant sigma {sigma} lies outside [{}, {}]",
                band.sigma_lo(),
                band.sigma_hi()
            )));
        }
        Ok(Self {
            kind: PolicyKind::Constant { sigma },
            band,
            n,
            alpha: Probability::new(0.5)?,
            cuts: vec![sigma],
        })
    }

    pub fn one_sided_optimal(band: VolatilityBand, n: usize, alpha: Probability) -> Result<Self> {
        check_horizon(n)?;
        check_alpha(alpha)?;
        let cut = band.sigma_hi() * norm_quantile(1.0 - alpha.value())?;
        Ok(Self { kind: PolicyKind::OneSidedOptimal, band, n, alpha, cuts: vec![cut] })
    }

    /// Two-sided rule driven by a threshold table; the table is looked up at
    /// the nearest retained `time_remaining`.
    pub fn two_sided_threshold(
        band: VolatilityBand,
        n: usize,
        alpha: Probability,
        table: ThresholdTable,
    ) -> Result<Self> {
        check_horizon(n)?;
        check_alpha(alpha)?;
        if table.rows.is_empty() {
            return Err(Error::Config("threshold table has no rows".into()));
        }
        let mut cuts = vec![f64::NAN; n + 1];
        for (i, cut) in cuts.iter_mut().enumerate().skip(1) {
            *cut = table.lookup(1.0 - (i - 1) as f64 / n as f64);
        }
        Ok(Self { kind: PolicyKind::TwoSidedThreshold { table }, band, n, alpha, cuts })
    }

    pub fn heuristic_t(band: VolatilityBand, n: usize, alpha: Probability, critical: CriticalValue) -> Result<Self> {
        check_horizon(n)?;
        check_alpha(alpha)?;
        let p = 1.0 - 0.5 * alpha.value();
        let mut cuts = vec![f64::NAN; n + 1];
        for (i, cut) in cuts.iter_mut().enumerate().skip(3) {
            *cut = match critical {
                CriticalValue::Normal => norm_quantile(p)?,
                CriticalValue::StudentByStep => t_quantile(p, (i - 2) as u32)?,
                CriticalValue::Fixed(c) if c.is_finite() && c > 0.0 => c,
                CriticalValue::Fixed(c) => return Err(domain(format!("critical value must be > 0, got {c}"))),
            };
        }
        Ok(Self { kind: PolicyKind::HeuristicT { critical }, band, n, alpha, cuts })
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn band(&self) -> &VolatilityBand {
        &self.band
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> Probability {
        self.alpha
    }

    /// Switching level in effect at step `i`.
    pub fn cut(&self, i: usize) -> f64 {
        if self.cuts.len() == 1 {
            self.cuts[0]
        } else {
            self.cuts[i]
        }
    }
}

/// Running summary of `X_1, …, X_{i−1}` at the start of step `i`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolicyState {
    /// Current step, 1-based.
    pub i: usize,
    /// `S_{i−1}`.
    pub running_sum: f64,
    pub running_sum_sq: f64,
    /// Observations so far, always `i − 1`.
    pub count: usize,
    mean: f64,
    m2: f64,
}

impl PolicyState {
    pub fn new() -> Self {
        Self { i: 1, ..Self::default() }
    }

    /// State at step `i` reconstructed from its sums.
    pub fn from_sums(i: usize, running_sum: f64, running_sum_sq: f64) -> Result<Self> {
        if i == 0 {
            return Err(Error::Logic("steps are 1-based".into()));
        }
        let count = i - 1;
        let (mean, m2) = if count == 0 {
            (0.0, 0.0)
        } else {
            let mean = running_sum / count as f64;
            (mean, (running_sum_sq - running_sum * mean).max(0.0))
        };
        Ok(Self { i, running_sum, running_sum_sq, count, mean, m2 })
    }

    /// Record `X_i` and advance to step `i + 1`.
    pub fn observe(&mut self, x: f64) {
        self.count += 1;
        self.i += 1;
        self.running_sum += x;
        self.running_sum_sq += x * x;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (divisor `count − 1`); `None` below two
    /// observations.
    pub fn sample_variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }
}

/// `σ_i` for the state at the start of step `i`.
pub fn next_sigma(spec: &PolicySpec, state: &PolicyState) -> Result<f64> {
    if state.i == 0 || state.i > spec.n || state.count + 1 != state.i {
        return Err(Error::Logic(format!(
            "state at step {} with {} observations does not fit horizon n = {}",
            state.i, state.count, spec.n
        )));
    }
    let (lo, hi) = (spec.band.sigma_lo(), spec.band.sigma_hi());
    let root_n = (spec.n as f64).sqrt();
    let pick = |quiet: bool| if quiet { hi } else { lo };
    Ok(match spec.kind {
        PolicyKind::Constant { sigma } => sigma,
        PolicyKind::OneSidedOptimal => pick(state.running_sum / root_n <= spec.cuts[0]),
        PolicyKind::TwoSidedThreshold { .. } => pick(state.running_sum.abs() / root_n <= spec.cuts[state.i]),
        PolicyKind::HeuristicT { .. } => match state.sample_variance() {
            Some(var) if var > 0.0 => {
                let stat = state.running_sum.abs() / (spec.n as f64 * var).sqrt();
                pick(stat <= spec.cuts[state.i])
            }
            _ => hi,
        },
    })
}

/// Check that the sign rule `σ̄ iff u_xx(1 − (i−1)/n, S/√n) ≥ 0`, with `u`
/// the closed-form one-sided solution, picks the same volatility as the
/// threshold rule [`PolicyKind::OneSidedOptimal`] for every step and every
/// `S` on a grid spanning `±5√n` (plus the threshold itself).
pub fn pde_policy_equiv_check(band: &VolatilityBand, alpha: Probability, n: usize) -> Result<bool> {
    let spec = PolicySpec::one_sided_optimal(*band, n, alpha)?;
    let c = spec.cut(1);
    let root_n = (n as f64).sqrt();
    const POINTS: usize = 401;
    let mut sums: Vec<f64> = (0..POINTS)
        .map(|k| -5.0 * root_n + 10.0 * root_n * k as f64 / (POINTS - 1) as f64)
        .collect();
    let at_cut = c * root_n;
    sums.extend([at_cut, at_cut.next_down(), at_cut.next_up(), 0.0]);

    for i in 1..=n {
        let tau = 1.0 - (i - 1) as f64 / n as f64;
        for &s in &sums {
            let state = PolicyState::from_sums(i, s, s * s)?;
            let rule = next_sigma(&spec, &state)?;
            let x = s / root_n;
            let convex = profile_f_yy((x - c) / tau.sqrt(), band)?.is_sign_positive();
            let pde = if convex { band.sigma_hi() } else { band.sigma_lo() };
            if pde != rule {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band() -> VolatilityBand {
        VolatilityBand::new(0.8, 1.0).unwrap()
    }

    fn alpha(a: f64) -> Probability {
        Probability::new(a).unwrap()
    }

    #[test]
    fn one_sided_examples() {
        let spec = PolicySpec::one_sided_optimal(band(), 100, alpha(0.05)).unwrap();
        let quiet = PolicyState::from_sums(5, 0.0, 4.0).unwrap();
        assert_eq!(next_sigma(&spec, &quiet).unwrap(), 1.0);
        let loud = PolicyState::from_sums(5, 20.0, 400.0).unwrap();
        assert_eq!(next_sigma(&spec, &loud).unwrap(), 0.8);
    }

    #[test]
    fn constant_policy_ignores_state() {
        let spec = PolicySpec::constant(band(), 10, 0.9).unwrap();
        for s in [-100.0, 0.0, 100.0] {
            let st = PolicyState::from_sums(4, s, s * s).unwrap();
            assert_eq!(next_sigma(&spec, &st).unwrap(), 0.9);
        }
        assert!(PolicySpec::constant(band(), 10, 1.1).is_err());
        assert!(PolicySpec::constant(band(), 0, 0.9).is_err());
    }

    #[test]
    fn heuristic_degenerate_start_uses_upper_volatility() {
        let spec = PolicySpec::heuristic_t(band(), 20, alpha(0.05), CriticalValue::Normal).unwrap();
        let mut st = PolicyState::new();
        assert_eq!(next_sigma(&spec, &st).unwrap(), 1.0);
        st.observe(50.0);
        assert_eq!(next_sigma(&spec, &st).unwrap(), 1.0);
        // Two equal observations: zero variance, still σ̄.
        st.observe(50.0);
        assert_eq!(st.sample_variance(), Some(0.0));
        assert_eq!(next_sigma(&spec, &st).unwrap(), 1.0);
        st.observe(49.0);
        assert_eq!(next_sigma(&spec, &st).unwrap(), 0.8);
    }

    #[test]
    fn heuristic_uses_full_horizon_in_the_statistic() {
        // S = 3 over X = (2, 1, 0): s² = 1, statistic 3/√(n·1).
        let mut st = PolicyState::new();
        for x in [2.0, 1.0, 0.0] {
            st.observe(x);
        }
        let at = |n: usize| {
            let spec = PolicySpec::heuristic_t(band(), n, alpha(0.05), CriticalValue::Fixed(1.0)).unwrap();
            next_sigma(&spec, &st).unwrap()
        };
        assert_eq!(at(4), 0.8); // 3/2 > 1
        assert_eq!(at(9), 1.0); // 3/3 = 1, tie goes to σ̄
        assert_eq!(at(16), 1.0);
    }

    #[test]
    fn student_critical_values_follow_the_step() {
        let spec = PolicySpec::heuristic_t(band(), 30, alpha(0.05), CriticalValue::StudentByStep).unwrap();
        assert!((spec.cut(21) - t_quantile(0.975, 19).unwrap()).abs() < 1e-15);
        assert!(spec.cut(3) > spec.cut(30));
        let normal = PolicySpec::heuristic_t(band(), 30, alpha(0.05), CriticalValue::Normal).unwrap();
        assert!((normal.cut(7) - 1.959_963_984_540_054).abs() < 1e-15);
    }

    #[test]
    fn state_mismatch_is_a_logic_error() {
        let spec = PolicySpec::one_sided_optimal(band(), 3, alpha(0.05)).unwrap();
        let late = PolicyState::from_sums(4, 0.0, 0.0).unwrap();
        assert!(matches!(next_sigma(&spec, &late), Err(Error::Logic(_))));
        let mut broken = PolicyState::new();
        broken.count = 2;
        assert!(matches!(next_sigma(&spec, &broken), Err(Error::Logic(_))));
    }

    #[test]
    fn welford_matches_sums() {
        let mut st = PolicyState::new();
        let xs = [0.3, -1.2, 2.5, 0.7, -0.4];
        for &x in &xs {
            st.observe(x);
        }
        let rebuilt = PolicyState::from_sums(6, st.running_sum, st.running_sum_sq).unwrap();
        assert!((st.sample_variance().unwrap() - rebuilt.sample_variance().unwrap()).abs() < 1e-14);
        assert!((st.mean() - xs.iter().sum::<f64>() / 5.0).abs() < 1e-15);
    }
}
