//! Standard normal and Student-t distribution functions.
//!
//! Everything here is self-contained: the normal CDF is built on a
//! full-precision `erfc`, the t CDF on the regularized incomplete beta
//! function, and both quantiles on a bracketed Newton/Halley refinement.

mod erf;
mod gamma;

pub use erf::erfc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(domain(format!("probability must lie in [0, 1], got {value}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn complement(self) -> Self {
        Self(1.0 - self.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = crate::Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl std::fmt::Display for Probability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF `Φ(x)`, accurate to ~1 ulp relative in both tails.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

// Acklam's rational approximation, used only as the starting point for
// Halley refinement.
const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

/// Initial guess for `Φ⁻¹(p)` with `0 < p <= 0.5`.
fn acklam_lower(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        let c = &ACKLAM_C;
        let d = &ACKLAM_D;
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        let a = &ACKLAM_A;
        let b = &ACKLAM_B;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    }
}

/// Standard normal quantile `Φ⁻¹(p)` for `0 < p < 1`.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("norm_quantile requires 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // 1 - p is exact for p in [0.5, 1), so solving in the lower tail loses nothing.
    let (lower, flip) = if p > 0.5 { (1.0 - p, true) } else { (p, false) };
    let mut x = acklam_lower(lower);
    for _ in 0..3 {
        let e = norm_cdf(x) - lower;
        let u = e * SQRT_2PI * (0.5 * x * x).exp();
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-17 * x.abs() {
            break;
        }
    }
    Ok(if flip { -x } else { x })
}

fn check_df(df: u32) -> Result<f64> {
    if df < 1 {
        return Err(domain("Student-t degrees of freedom must be >= 1"));
    }
    Ok(df as f64)
}

/// Student-t density with `df` degrees of freedom.
pub fn t_pdf(x: f64, df: u32) -> Result<f64> {
    let nu = check_df(df)?;
    let ln = -gamma::ln_beta(0.5 * nu, 0.5) - 0.5 * nu.ln() - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p();
    Ok(ln.exp())
}

/// Lower-tail mass `P(T <= -|x|)`.
fn t_lower_tail(x: f64, nu: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    let x2 = x * x;
    let denom = nu + x2;
    0.5 * gamma::inc_beta(0.5 * nu, 0.5, nu / denom, x2 / denom)
}

/// Student-t CDF with `df` degrees of freedom.
pub fn t_cdf(x: f64, df: u32) -> Result<f64> {
    let nu = check_df(df)?;
    if x.is_nan() {
        return Err(domain("t_cdf of NaN"));
    }
    if x == 0.0 {
        return Ok(0.5);
    }
    let tail = t_lower_tail(x, nu);
    Ok(if x > 0.0 { 1.0 - tail } else { tail })
}

/// Student-t quantile with `df` degrees of freedom, `0 < p < 1`.
pub fn t_quantile(p: f64, df: u32) -> Result<f64> {
    let nu = check_df(df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("t_quantile requires 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let (target, flip) = if p > 0.5 { (1.0 - p, true) } else { (p, false) };

    // Bracket the root on the negative half line: F(lo) < target <= F(hi).
    let mut hi = 0.0_f64;
    let mut lo = norm_quantile(target)?.min(-1.0);
    while t_lower_tail(lo, nu) >= target {
        hi = lo;
        lo *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = t_lower_tail(x, nu) - target;
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = t_pdf(x, df)?;
        let newton = x - f / pdf;
        let next = if pdf > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= 4.0 * f64::EPSILON * lo.abs() {
            x = next;
            break;
        }
        x = next;
    }
    Ok(if flip { -x } else { x })
}
