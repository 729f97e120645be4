//! Closed-form G-normal tail machinery.
//!
//! For initial data `1{x > c}` the G-heat equation
//! `u_t = ½(σ̄² (u_xx)⁺ − σ̲² (u_xx)⁻)` has the self-similar solution
//! `u(t, x) = f((x − c)/√t)` with
//!
//! ```text
//! f(y) = 2σ̄/(σ̄+σ̲) · Φ(y/σ̄)                 y < 0
//! f(y) = 1 − 2σ̲/(σ̄+σ̲) · Φ(−y/σ̲)            y ≥ 0
//! ```
//!
//! which is the two-piece Gaussian tail integral written through `Φ`.
//! The one-sided capacity is `p1(c) = f(−c)`. The two-sided capacity has no
//! closed form; `2 p1(c)` over-estimates it by at most
//! [`two_sided_error_bound`] when `c > σ̄√t/2`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::special_fn::{norm_cdf, norm_pdf};

/// The admissible volatility interval `[σ̲, σ̄]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilityBand {
    sigma_lo: f64,
    sigma_hi: f64,
}

impl VolatilityBand {
    /// Band with `0 < sigma_lo <= sigma_hi < ∞`.
    pub fn new(sigma_lo: f64, sigma_hi: f64) -> Result<Self> {
        if !(sigma_lo > 0.0) {
            return Err(domain(format!("sigma_lo must be > 0, got {sigma_lo}")));
        }
        Self::with_zero_floor(sigma_lo, sigma_hi)
    }

    /// Band that also admits `sigma_lo = 0`. Only the PDE solver accepts
    /// such bands; the closed-form functions reject them.
    pub fn with_zero_floor(sigma_lo: f64, sigma_hi: f64) -> Result<Self> {
        if !(sigma_lo >= 0.0) || !sigma_hi.is_finite() || sigma_hi <= 0.0 || sigma_lo > sigma_hi {
            return Err(domain(format!(
                "need 0 <= sigma_lo <= sigma_hi < inf and sigma_hi > 0, got [{sigma_lo}, {sigma_hi}]"
            )));
        }
        Ok(Self { sigma_lo, sigma_hi })
    }

    /// Degenerate band `σ̲ = σ̄ = sigma` (classical normal case).
    pub fn classical(sigma: f64) -> Result<Self> {
        Self::new(sigma, sigma)
    }

    #[inline]
    pub fn sigma_lo(&self) -> f64 {
        self.sigma_lo
    }

    #[inline]
    pub fn sigma_hi(&self) -> f64 {
        self.sigma_hi
    }

    #[inline]
    pub fn is_classical(&self) -> bool {
        self.sigma_lo == self.sigma_hi
    }

    /// `G(m) = ½(σ̄² m⁺ − σ̲² m⁻)`.
    #[inline]
    pub fn g(&self, m: f64) -> f64 {
        if m >= 0.0 {
            0.5 * self.sigma_hi * self.sigma_hi * m
        } else {
            0.5 * self.sigma_lo * self.sigma_lo * m
        }
    }

    /// Clamp a volatility into the band.
    #[inline]
    pub fn clamp(&self, sigma: f64) -> f64 {
        sigma.clamp(self.sigma_lo, self.sigma_hi)
    }

    pub(crate) fn require_positive(&self) -> Result<()> {
        if self.sigma_lo > 0.0 {
            Ok(())
        } else {
            Err(domain("closed-form capacities require sigma_lo > 0"))
        }
    }
}

/// A point `(t, x)` of the Cauchy problem with initial threshold `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailQuery {
    pub c: f64,
    pub t: f64,
    pub x: f64,
}

impl TailQuery {
    pub fn new(c: f64, t: f64, x: f64) -> Result<Self> {
        let q = Self { c, t, x };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        if !(self.t >= 0.0) {
            return Err(domain(format!("time must be >= 0, got {}", self.t)));
        }
        if self.c.is_nan() || self.x.is_nan() {
            return Err(domain("threshold and space point must not be NaN"));
        }
        Ok(())
    }
}

/// Profile `f(y)` that also tolerates `σ̲ = 0` (as the limit `σ̲ → 0⁺`).
pub(crate) fn profile_value(y: f64, band: &VolatilityBand) -> f64 {
    let (lo, hi) = (band.sigma_lo, band.sigma_hi);
    let sum = hi + lo;
    if y < 0.0 {
        2.0 * hi / sum * norm_cdf(y / hi)
    } else if lo == 0.0 {
        1.0
    } else {
        1.0 - 2.0 * lo / sum * norm_cdf(-y / lo)
    }
}

/// Self-similar profile `f(y; σ̲, σ̄)`.
pub fn profile_f(y: f64, band: &VolatilityBand) -> Result<f64> {
    band.require_positive()?;
    if y.is_nan() {
        return Err(domain("profile_f of NaN"));
    }
    Ok(profile_value(y, band))
}

/// Second derivative `f_yy(y)`.
///
/// The sign of the result (including the sign of a zero produced by
/// underflow) is always `sign(−y)`, with `+0.0` at `y = 0`.
pub fn profile_f_yy(y: f64, band: &VolatilityBand) -> Result<f64> {
    band.require_positive()?;
    if y.is_nan() {
        return Err(domain("profile_f_yy of NaN"));
    }
    let (lo, hi) = (band.sigma_lo, band.sigma_hi);
    let factor = if y == 0.0 { 0.0 } else { -2.0 * y / (hi + lo) };
    let s = if y <= 0.0 { hi } else { lo };
    Ok(factor * norm_pdf(y / s) / (s * s))
}

/// Solution of the Cauchy problem with initial data `1{x > c}`.
pub fn u_one_sided(q: &TailQuery, band: &VolatilityBand) -> Result<f64> {
    band.require_positive()?;
    q.validate()?;
    if q.t == 0.0 {
        return Ok(if q.x > q.c { 1.0 } else { 0.0 });
    }
    Ok(profile_value((q.x - q.c) / q.t.sqrt(), band))
}

/// Solution of the Cauchy problem with initial data `1{x < −c}`.
pub fn v_one_sided(q: &TailQuery, band: &VolatilityBand) -> Result<f64> {
    u_one_sided(&TailQuery { x: -q.x, ..*q }, band)
}

/// `u_xx(t, x) = f_yy((x − c)/√t) / t` for `t > 0`.
pub fn u_one_sided_xx(q: &TailQuery, band: &VolatilityBand) -> Result<f64> {
    q.validate()?;
    if q.t == 0.0 {
        return Err(domain("u_xx is undefined at t = 0"));
    }
    Ok(profile_f_yy((q.x - q.c) / q.t.sqrt(), band)? / q.t)
}

/// `v_xx(t, x) = f_yy((−x − c)/√t) / t` for `t > 0`.
pub fn v_one_sided_xx(q: &TailQuery, band: &VolatilityBand) -> Result<f64> {
    u_one_sided_xx(&TailQuery { x: -q.x, ..*q }, band)
}

/// One-sided tail capacity `p1(c; σ̲, σ̄)`.
pub fn p1(c: f64, band: &VolatilityBand) -> Result<f64> {
    band.require_positive()?;
    if c.is_nan() {
        return Err(domain("p1 of NaN"));
    }
    Ok(profile_value(-c, band))
}

/// `2 p1(c)` together with the bounds on how far it over-estimates `p2(c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P2Approx {
    /// `2 p1(c)`, an upper bound on `p2(c)`.
    pub value: f64,
    /// Upper bound on `2 p1(c) − p2(c)` at `t = 1` ([`two_sided_error_bound`]).
    pub absolute_error_bound: f64,
    /// Closed-form relative error bound ([`relative_error_bound`] at `t = 1`).
    pub relative_error_bound: f64,
    /// `absolute_error_bound / value`: a sharper relative bound using the
    /// exact denominator instead of its Mills-ratio lower estimate.
    pub relative_error_bound_exact_denominator: f64,
}

fn require_bound_regime(c: f64, t: f64, band: &VolatilityBand) -> Result<()> {
    band.require_positive()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(domain(format!("time must be finite and >= 0, got {t}")));
    }
    let floor = 0.5 * band.sigma_hi * t.sqrt();
    if !(c > floor) {
        return Err(Error::Precondition(format!(
            "error bounds need c > sigma_hi*sqrt(t)/2 = {floor}, got c = {c}"
        )));
    }
    Ok(())
}

/// Approximate two-sided capacity `p2(c) ≈ 2 p1(c)`; requires `c > σ̄/2`.
pub fn p2_approx(c: f64, band: &VolatilityBand) -> Result<P2Approx> {
    require_bound_regime(c, 1.0, band)?;
    let value = 2.0 * p1(c, band)?;
    let absolute_error_bound = two_sided_error_bound(c, 1.0, band)?;
    Ok(P2Approx {
        value,
        absolute_error_bound,
        relative_error_bound: relative_error_bound(c, 1.0, band)?,
        relative_error_bound_exact_denominator: absolute_error_bound / value,
    })
}

/// `2(σ̄ − σ̲)/σ̄ · Φ(−2c/(σ̄√t))`, valid for `c > σ̄√t/2`.
pub fn two_sided_error_bound(c: f64, t: f64, band: &VolatilityBand) -> Result<f64> {
    require_bound_regime(c, t, band)?;
    let (lo, hi) = (band.sigma_lo, band.sigma_hi);
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * (hi - lo) / hi * norm_cdf(-2.0 * c / (hi * t.sqrt())))
}

/// Mills-ratio relaxation of [`two_sided_error_bound`]:
/// `(σ̄ − σ̲)√t/(c√(2π)) · exp(−2c²/(σ̄² t))`; requires `c > σ̄/2`.
pub fn absolute_error_bound(c: f64, t: f64, band: &VolatilityBand) -> Result<f64> {
    require_bound_regime(c, t, band)?;
    require_bound_regime(c, 1.0, band)?;
    let (lo, hi) = (band.sigma_lo, band.sigma_hi);
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok((hi - lo) * t.sqrt() * norm_pdf(0.0) / c * (-2.0 * c * c / (hi * hi * t)).exp())
}

/// Relative error bound for `u + v` against `w`:
/// `(σ̄² − σ̲²)(c²/σ̄² + t)/(4c²) · exp(−3c²/(2σ̄² t))`; requires `c > σ̄/2`.
pub fn relative_error_bound(c: f64, t: f64, band: &VolatilityBand) -> Result<f64> {
    require_bound_regime(c, t, band)?;
    require_bound_regime(c, 1.0, band)?;
    let (lo, hi) = (band.sigma_lo, band.sigma_hi);
    if t == 0.0 {
        return Ok(0.0);
    }
    let c2 = c * c;
    Ok((hi * hi - lo * lo) * (c2 / (hi * hi) + t) / (4.0 * c2) * (-1.5 * c2 / (hi * hi * t)).exp())
}

/// Leading-order relative error of `p2 ≈ 2 p1` as `c → ∞`:
/// `(1 − σ̲²/σ̄²)/4 · exp(−3c²/(2σ̄²))`.
pub fn asymptotic_relative_error(c: f64, band: &VolatilityBand) -> Result<f64> {
    band.require_positive()?;
    let (lo, hi) = (band.sigma_lo, band.sigma_hi);
    Ok((1.0 - lo * lo / (hi * hi)) / 4.0 * (-1.5 * c * c / (hi * hi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special_fn::norm_quantile;

    fn band() -> VolatilityBand {
        VolatilityBand::new(0.8, 1.0).unwrap()
    }

    #[test]
    fn band_validation() {
        assert!(VolatilityBand::new(0.0, 1.0).is_err());
        assert!(VolatilityBand::new(1.2, 1.0).is_err());
        assert!(VolatilityBand::new(0.5, f64::INFINITY).is_err());
        assert!(VolatilityBand::new(f64::NAN, 1.0).is_err());
        assert!(VolatilityBand::with_zero_floor(0.0, 1.0).is_ok());
        assert!(VolatilityBand::with_zero_floor(0.0, 0.0).is_err());
        let zero = VolatilityBand::with_zero_floor(0.0, 1.0).unwrap();
        assert!(p1(1.0, &zero).is_err());
        assert!(profile_f(0.0, &zero).is_err());
    }

    #[test]
    fn g_is_piecewise_linear() {
        let b = band();
        assert_eq!(b.g(2.0), 1.0);
        assert!((b.g(-2.0) + 0.64).abs() < 1e-15);
        assert_eq!(b.g(0.0), 0.0);
    }

    #[test]
    fn profile_limits_and_centre() {
        let b = band();
        assert_eq!(profile_f(f64::INFINITY, &b).unwrap(), 1.0);
        assert_eq!(profile_f(f64::NEG_INFINITY, &b).unwrap(), 0.0);
        assert!((profile_f(0.0, &b).unwrap() - 1.0 / 1.8).abs() < 1e-15);
    }

    #[test]
    fn profile_f_yy_sign_and_zero() {
        let b = band();
        assert_eq!(profile_f_yy(0.0, &b).unwrap(), 0.0);
        assert!(profile_f_yy(0.0, &b).unwrap().is_sign_positive());
        assert!(profile_f_yy(-1.0, &b).unwrap() > 0.0);
        assert!(profile_f_yy(1.0, &b).unwrap() < 0.0);
        // Underflowed values keep the sign of -y.
        assert!(profile_f_yy(200.0, &b).unwrap().is_sign_negative());
        assert!(profile_f_yy(-200.0, &b).unwrap().is_sign_positive());
    }

    #[test]
    fn initial_conditions() {
        let b = band();
        assert_eq!(u_one_sided(&TailQuery::new(0.0, 0.0, 1.0).unwrap(), &b).unwrap(), 1.0);
        assert_eq!(u_one_sided(&TailQuery::new(0.0, 0.0, -1.0).unwrap(), &b).unwrap(), 0.0);
        assert_eq!(v_one_sided(&TailQuery::new(1.0, 0.0, -2.0).unwrap(), &b).unwrap(), 1.0);
        assert!(TailQuery::new(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn threshold_point_is_self_similar() {
        let b = band();
        for t in [0.01, 1.0, 4.0, 100.0] {
            let u = u_one_sided(&TailQuery::new(0.7, t, 0.7).unwrap(), &b).unwrap();
            assert!((u - 1.0 / 1.8).abs() < 1e-15);
        }
    }

    #[test]
    fn p1_at_alpha_quantile() {
        let b = band();
        for alpha in [0.5, 0.1, 0.05, 0.01, 0.001] {
            let c = norm_quantile(1.0 - alpha).unwrap();
            let want = 2.0 * alpha / 1.8;
            assert!((p1(c, &b).unwrap() - want).abs() < 1e-15, "alpha={alpha}");
        }
    }

    #[test]
    fn bounds_preconditions() {
        let b = band();
        assert!(matches!(p2_approx(0.5, &b), Err(Error::Precondition(_))));
        assert!(matches!(two_sided_error_bound(1.0, 4.0, &b), Err(Error::Precondition(_))));
        assert!(two_sided_error_bound(1.0, 3.9, &b).is_ok());
        assert!(matches!(relative_error_bound(0.4, 0.5, &b), Err(Error::Precondition(_))));
        assert!(two_sided_error_bound(1.0, -1.0, &b).is_err());
    }

    #[test]
    fn classical_bounds_vanish() {
        let b = VolatilityBand::classical(1.3).unwrap();
        assert_eq!(two_sided_error_bound(2.0, 1.0, &b).unwrap(), 0.0);
        assert_eq!(relative_error_bound(2.0, 1.0, &b).unwrap(), 0.0);
        assert_eq!(absolute_error_bound(2.0, 1.0, &b).unwrap(), 0.0);
    }
}
