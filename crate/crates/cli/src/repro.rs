//! Headline numbers: three two-sided capacities, two heuristic-t rejection
//! rates and the one-sided limit.

use gnormal_core::capacity::{self, VolatilityBand};
use gnormal_core::policy::{CriticalValue, PolicySpec};
use gnormal_core::simulate::{self, Noise, Sided, SimulationConfig, SimulationReport, Statistic, TestSpec};
use gnormal_core::special_fn::norm_quantile;
use gnormal_core::Probability;
use serde::Serialize;

use crate::args::ReproArgs;
use crate::commands::{workers, Outcome};
use crate::Failure;

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: String,
    pub pass: bool,
}

fn rounds_to(x: f64, digits: usize, want: &str) -> bool {
    format!("{x:.digits$}") == want
}

fn heuristic(band: VolatilityBand, n: usize, critical: CriticalValue, a: &ReproArgs) -> Result<SimulationReport, Failure> {
    let alpha = Probability::new(0.05)?;
    let config = SimulationConfig {
        n,
        reps: a.sim_reps,
        policy: PolicySpec::heuristic_t(band, n, alpha, critical)?,
        test: TestSpec { sided: Sided::Two, alpha, statistic: Statistic::T },
        noise: Noise::StandardNormal,
        seed: a.seed,
        workers: workers(a.workers),
    };
    Ok(simulate::run(&config)?)
}

pub fn checks(a: &ReproArgs) -> Result<Vec<Check>, Failure> {
    let band = VolatilityBand::new(0.8, 1.0)?;
    let mut out = Vec::new();

    for (p, digits, want, re_max) in [(0.95, 2, "0.11", 2e-3), (0.975, 3, "0.056", 4e-4), (0.995, 3, "0.011", 5e-6)] {
        let approx = capacity::p2_approx(norm_quantile(p)?, &band)?;
        out.push(Check {
            name: format!("p2_approx(q{p})"),
            value: approx.value,
            expected: format!("rounds to {want}"),
            pass: rounds_to(approx.value, digits, want),
        });
        out.push(Check {
            name: format!("relative_error_bound(q{p})"),
            value: approx.relative_error_bound,
            expected: format!("< {re_max:e}"),
            pass: approx.relative_error_bound < re_max,
        });
    }

    let tol = if a.sim_reps >= 1_000_000 { 0.0020 } else { 0.0045 };
    for (n, published) in [(20, 0.0565), (200, 0.0589)] {
        let mut nearest = f64::NAN;
        for (label, critical) in [("normal", CriticalValue::Normal), ("t", CriticalValue::StudentByStep)] {
            let r = heuristic(band, n, critical, a)?;
            if nearest.is_nan() || (r.rate - published).abs() < (nearest - published).abs() {
                nearest = r.rate;
            }
            out.push(Check {
                name: format!("heuristic-t n={n} c_alpha={label}"),
                value: r.rate,
                expected: "> 0.05 by 3 Wilson sd".into(),
                pass: simulate::wilson_interval(r.rejections, r.effective_reps(), 3.0).0 > 0.05,
            });
        }
        out.push(Check {
            name: format!("heuristic-t n={n} nearest c_alpha"),
            value: nearest,
            expected: format!("{published} +/- {tol}"),
            pass: (nearest - published).abs() <= tol,
        });
    }

    let alpha = Probability::new(0.05)?;
    let limit = 0.1 / 1.8;
    let config = SimulationConfig {
        n: a.limit_n,
        reps: a.limit_reps,
        policy: PolicySpec::one_sided_optimal(band, a.limit_n, alpha)?,
        test: TestSpec { sided: Sided::One, alpha, statistic: Statistic::Z { sigma_ref: 1.0 } },
        noise: Noise::StandardNormal,
        seed: a.seed,
        workers: workers(a.workers),
    };
    let r = simulate::run(&config)?;
    out.push(Check {
        name: format!("one-sided limit n={}", a.limit_n),
        value: r.rate,
        expected: format!("{limit} +/- 0.004"),
        pass: (r.rate - limit).abs() <= 0.004,
    });
    Ok(out)
}

pub fn run(a: &ReproArgs) -> Result<Outcome, Failure> {
    let checks = checks(a)?;
    let holds = checks.iter().all(|c| c.pass);
    let stdout = if a.json {
        let mut v = serde_json::to_vec_pretty(&checks).map_err(|e| Failure::internal(e.to_string()))?;
        v.push(b'\n');
        v
    } else {
        let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut s = String::new();
        for c in &checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            s.push_str(&format!("{verdict}  {:width$}  {:<24?}  {}\n", c.name, c.value, c.expected));
        }
        s.into_bytes()
    };
    Ok(Outcome { stdout, seed: Some(a.seed), holds, ..Outcome::default() })
}
