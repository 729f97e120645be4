//! Explicit monotone finite differences for the G-heat equation
//! `u_t = G(u_xx)` on a truncated interval.
//!
//! Each step is `u ← u + dt·G(D²u)` with the three-point second difference.
//! The scheme is monotone whenever `dt·σ̄²/dx² ≤ 1`, so it converges to the
//! viscosity solution and keeps indicator data inside `[0, 1]`.
//!
//! Only a fixed number of uniformly spaced time levels is retained (see
//! [`GridSpec::levels`]); the time step is shrunk slightly so that every
//! retained level is hit exactly.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::capacity::{profile_value, two_sided_error_bound, VolatilityBand};
use crate::error::{domain, Error, Result};
use crate::special_fn::{norm_quantile, Probability};

/// Retained time levels when none are requested explicitly.
pub const DEFAULT_LEVELS: usize = 100;

/// Default CFL fraction.
pub const DEFAULT_SAFETY: f64 = 0.5;

/// Second differences smaller than `NOISE_ULPS·ε·max|u|/dx²` are treated as
/// zero when reading off signs.
const NOISE_ULPS: f64 = 64.0;

/// A piecewise-linear function through strictly increasing nodes, extended
/// linearly past both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl SampledFunction {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(domain("table needs at least two (x, y) pairs of equal length"));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(domain("table entries must be finite"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain("table x values must be strictly increasing"));
        }
        Ok(Self { xs, ys })
    }

    /// Parse `x,y` lines. Blank lines, `#` comments and a non-numeric header
    /// line are skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(domain(format!("line {}: expected two comma-separated fields", lineno + 1)));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if xs.is_empty() => continue,
                _ => return Err(domain(format!("line {}: not a number pair", lineno + 1))),
            }
        }
        Self::new(xs, ys)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let k = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Initial data `φ` of the Cauchy problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// `1{x > c}`.
    IndicatorAbove { c: f64 },
    /// `1{|x| > c}` with `c ≥ 0`.
    IndicatorAbsAbove { c: f64 },
    /// Piecewise-linear data; boundaries are held at their initial values.
    Table(SampledFunction),
}

impl InitialCondition {
    fn validate(&self) -> Result<()> {
        match *self {
            Self::IndicatorAbove { c } if !c.is_finite() => Err(domain("indicator threshold must be finite")),
            Self::IndicatorAbsAbove { c } if !(c.is_finite() && c >= 0.0) => {
                Err(domain(format!("two-sided threshold must be finite and >= 0, got {c}")))
            }
            _ => Ok(()),
        }
    }

    /// `φ(x)`. Indicators are sampled strictly, which on grids where `c`
    /// falls between nodes puts the jump at the inter-node midpoint.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::IndicatorAbove { c } => f64::from(u8::from(x > *c)),
            Self::IndicatorAbsAbove { c } => f64::from(u8::from(x.abs() > *c)),
            Self::Table(f) => f.eval(x),
        }
    }

    /// Dirichlet data at `(t, x)` for `t > 0`.
    fn boundary(&self, t: f64, x: f64, band: &VolatilityBand) -> f64 {
        let s = t.sqrt();
        match *self {
            Self::IndicatorAbove { c } => profile_value((x - c) / s, band),
            Self::IndicatorAbsAbove { c } => profile_value((x - c) / s, band) + profile_value((-x - c) / s, band),
            Self::Table(ref f) => f.eval(x),
        }
    }

    /// Closed-form solution where one exists (one-sided indicator only).
    fn exact(&self, t: f64, x: f64, band: &VolatilityBand) -> Option<f64> {
        match *self {
            Self::IndicatorAbove { .. } if t == 0.0 => Some(self.eval(x)),
            Self::IndicatorAbove { c } => Some(profile_value((x - c) / t.sqrt(), band)),
            _ => None,
        }
    }
}

/// Space-time discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    /// Number of space nodes, including both boundary nodes.
    pub nx: usize,
    pub t_end: f64,
    /// CFL fraction: `dt ≤ safety·dx²/σ̄²`.
    pub safety: f64,
    /// Number of retained time levels after `t = 0`, uniformly spaced.
    pub levels: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, nx: usize, t_end: f64, safety: f64) -> Result<Self> {
        let g = Self { x_min, x_max, nx, t_end, safety, levels: DEFAULT_LEVELS };
        g.validate()?;
        Ok(g)
    }

    /// Symmetric grid whose nodes sit at half-integer multiples of `dx`, with
    /// `dx` adjusted so that `c` is an integer multiple. Both `0` and `±c`
    /// then fall exactly halfway between nodes, which keeps indicator data
    /// unambiguous and gives second-order accuracy at `x = 0`.
    pub fn aligned(c: f64, half_width: f64, dx_target: f64, t_end: f64) -> Result<Self> {
        if !(dx_target > 0.0 && dx_target.is_finite()) || !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Config(format!(
                "need dx > 0 and half width > 0, got dx = {dx_target}, half width = {half_width}"
            )));
        }
        let c = c.abs();
        let dx = if c > 0.0 {
            c / (c / dx_target).round().max(1.0)
        } else {
            dx_target
        };
        let half_nodes = (half_width / dx + 0.5).ceil() as usize;
        let x_max = (half_nodes as f64 - 0.5) * dx;
        Self::new(-x_max, x_max, 2 * half_nodes, t_end, DEFAULT_SAFETY)
    }

    pub fn with_levels(mut self, levels: usize) -> Result<Self> {
        self.levels = levels;
        self.validate()?;
        Ok(self)
    }

    pub fn with_safety(mut self, safety: f64) -> Result<Self> {
        self.safety = safety;
        self.validate()?;
        Ok(self)
    }

    /// Grid with `dx/2` whose nodes pair up around the nodes of `self`: fine
    /// nodes `2j` and `2j + 1` straddle coarse node `j` at `±dx/4`.
    pub fn refined(&self) -> Self {
        let q = 0.25 * self.dx();
        Self {
            x_min: self.x_min - q,
            x_max: self.x_max + q,
            nx: 2 * self.nx,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return Err(Error::Config(format!("need x_min < x_max, got [{}, {}]", self.x_min, self.x_max)));
        }
        if self.nx < 3 {
            return Err(Error::Config(format!("need nx >= 3, got {}", self.nx)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("need 0 < t_end < inf, got {}", self.t_end)));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::Config(format!(
                "CFL violated: safety must lie in (0, 1], got {}",
                self.safety
            )));
        }
        if self.levels == 0 {
            return Err(Error::Config("need at least one retained time level".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    /// Node `j`. Nodes are laid out from both ends towards the middle, so a
    /// grid with `x_min = −x_max` is exactly mirror-symmetric.
    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        let last = self.nx - 1;
        if 2 * j < last {
            self.x_min + j as f64 * self.dx()
        } else if 2 * j == last {
            0.5 * (self.x_min + self.x_max)
        } else {
            self.x_max - (last - j) as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|j| self.x(j)).collect()
    }

    /// Retained times `0, t_end/levels, …, t_end`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.levels)
            .map(|l| if l == self.levels { self.t_end } else { self.t_end * l as f64 / self.levels as f64 })
            .collect()
    }

    /// `(steps per retained level, dt)` for the given band.
    pub fn schedule(&self, band: &VolatilityBand) -> Result<(usize, f64)> {
        self.validate()?;
        let dx = self.dx();
        let dt_max = self.safety * dx * dx / (band.sigma_hi() * band.sigma_hi());
        let span = self.t_end / self.levels as f64;
        let steps = (span / dt_max).ceil();
        if !(steps.is_finite() && steps < 1e12) {
            return Err(Error::Config(format!("time step count {steps} is not representable")));
        }
        let steps = (steps as usize).max(1);
        Ok((steps, span / steps as f64))
    }

    /// Whether `[−half, half]` lies inside the grid.
    pub fn covers(&self, half: f64) -> bool {
        self.x_min <= -half && self.x_max >= half
    }
}

/// `((u[j−1] + u[j+1]) − 2u[j])/dx²` at interior nodes, zero at the ends.
/// Grouping the neighbours first keeps the result mirror-symmetric.
fn second_difference(u: &[f64], inv_dx2: f64) -> Vec<f64> {
    let mut d = vec![0.0; u.len()];
    for j in 1..u.len() - 1 {
        d[j] = ((u[j - 1] + u[j + 1]) - 2.0 * u[j]) * inv_dx2;
    }
    d
}

fn noise_floor(u: &[f64], inv_dx2: f64) -> f64 {
    let scale = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    NOISE_ULPS * f64::EPSILON * scale * inv_dx2
}

fn signs(d: &[f64], floor: f64) -> impl Iterator<Item = i8> + '_ {
    d.iter().map(move |&v| {
        if v > floor {
            1
        } else if v < -floor {
            -1
        } else {
            0
        }
    })
}

/// Time-march `ic`, calling `observe(level, t, u)` at `t = 0` and at every
/// retained level.
fn march(
    ic: &InitialCondition,
    band: &VolatilityBand,
    grid: &GridSpec,
    mut observe: impl FnMut(usize, f64, &[f64]),
) -> Result<()> {
    ic.validate()?;
    let (steps_per_level, dt) = grid.schedule(band)?;
    let xs = grid.nodes();
    let dx = grid.dx();
    let inv_dx2 = 1.0 / (dx * dx);
    let times = grid.times();
    let last = grid.nx - 1;

    let mut u: Vec<f64> = xs.iter().map(|&x| ic.eval(x)).collect();
    let mut next = u.clone();
    observe(0, 0.0, &u);

    let mut step = 0usize;
    for (level, &t_level) in times.iter().enumerate().skip(1) {
        for _ in 0..steps_per_level {
            step += 1;
            let mut finite = true;
            for j in 1..last {
                let d2 = ((u[j - 1] + u[j + 1]) - 2.0 * u[j]) * inv_dx2;
                let v = u[j] + dt * band.g(d2);
                finite &= v.is_finite();
                next[j] = v;
            }
            if !finite {
                return Err(Error::Numerical { step, reason: "non-finite value in the interior".into() });
            }
            let t = if step.is_multiple_of(steps_per_level) { t_level } else { step as f64 * dt };
            next[0] = ic.boundary(t, xs[0], band);
            next[last] = ic.boundary(t, xs[last], band);
            if !(next[0].is_finite() && next[last].is_finite()) {
                return Err(Error::Numerical { step, reason: "non-finite boundary value".into() });
            }
            std::mem::swap(&mut u, &mut next);
        }
        observe(level, t_level, &u);
    }
    Ok(())
}

/// Retained levels of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub grid: GridSpec,
    pub ic: InitialCondition,
    pub band: VolatilityBand,
    pub times: Vec<f64>,
    /// Row-major `values[level * nx + j]`.
    values: Vec<f64>,
    /// Sign of `D²u` at each retained node, zero within the rounding floor
    /// and at the two boundary nodes.
    uxx_sign: Vec<i8>,
    /// Time steps taken to reach `t_end`.
    pub steps: usize,
    pub dt: f64,
}

impl GridSolution {
    pub fn level(&self, l: usize) -> &[f64] {
        &self.values[l * self.grid.nx..(l + 1) * self.grid.nx]
    }

    pub fn uxx_sign(&self, l: usize) -> &[i8] {
        &self.uxx_sign[l * self.grid.nx..(l + 1) * self.grid.nx]
    }

    pub fn last(&self) -> &[f64] {
        self.level(self.times.len() - 1)
    }

    pub fn n_levels(&self) -> usize {
        self.times.len()
    }

    /// Four-point Lagrange interpolation of level `l` at `x`.
    pub fn value_at(&self, l: usize, x: f64) -> Result<f64> {
        let g = &self.grid;
        if !(x >= g.x_min && x <= g.x_max) {
            return Err(domain(format!("x = {x} lies outside the grid [{}, {}]", g.x_min, g.x_max)));
        }
        let row = self.level(l);
        let dx = g.dx();
        let k = (((x - g.x_min) / dx).floor() as usize).min(g.nx - 2);
        let start = k.saturating_sub(1).min(g.nx - 4);
        let pts: Vec<(f64, f64)> = (start..start + 4).map(|j| (g.x(j), row[j])).collect();
        if let Some(&(_, v)) = pts.iter().find(|(xj, _)| *xj == x) {
            return Ok(v);
        }
        let mut total = 0.0;
        for (i, &(xi, yi)) in pts.iter().enumerate() {
            let mut w = 1.0;
            for (m, &(xm, _)) in pts.iter().enumerate() {
                if m != i {
                    w *= (x - xm) / (xi - xm);
                }
            }
            total += w * yi;
        }
        Ok(total)
    }

    /// Sup-norm distance to the closed form at level `l`, for one-sided
    /// indicator data.
    pub fn closed_form_error(&self, l: usize) -> Option<f64> {
        let t = self.times[l];
        let row = self.level(l);
        let mut worst = 0.0_f64;
        for (j, &u) in row.iter().enumerate() {
            worst = worst.max((u - self.ic.exact(t, self.grid.x(j), &self.band)?).abs());
        }
        Some(worst)
    }

    /// CSV dump: header `t,x,u`, time-major then space ascending.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x,u")?;
        for (l, &t) in self.times.iter().enumerate() {
            for (j, u) in self.level(l).iter().enumerate() {
                writeln!(out, "{t:?},{:?},{u:?}", self.grid.x(j))?;
            }
        }
        Ok(())
    }
}

/// Solve the Cauchy problem with data `ic` on `grid`.
///
/// Indicator data use the closed forms as Dirichlet values (`u`, or `u + v`
/// for the two-sided case); tabulated data hold their initial boundary values.
pub fn solve(ic: &InitialCondition, band: &VolatilityBand, grid: &GridSpec) -> Result<GridSolution> {
    let (steps_per_level, dt) = grid.schedule(band)?;
    let nx = grid.nx;
    let inv_dx2 = grid.dx().powi(-2);
    let mut values = Vec::with_capacity((grid.levels + 1) * nx);
    let mut uxx_sign = Vec::with_capacity((grid.levels + 1) * nx);
    let mut times = Vec::with_capacity(grid.levels + 1);
    march(ic, band, grid, |_, t, u| {
        times.push(t);
        values.extend_from_slice(u);
        let d = second_difference(u, inv_dx2);
        uxx_sign.extend(signs(&d, noise_floor(u, inv_dx2)));
    })?;
    Ok(GridSolution {
        grid: *grid,
        ic: ic.clone(),
        band: *band,
        times,
        values,
        uxx_sign,
        steps: steps_per_level * grid.levels,
        dt,
    })
}

fn check_p2_grid(c: f64, band: &VolatilityBand, grid: &GridSpec) -> Result<()> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(domain(format!("p2 needs a finite threshold c >= 0, got {c}")));
    }
    let half = c + 8.0 * band.sigma_hi();
    if !grid.covers(half) {
        return Err(Error::Config(format!(
            "grid [{}, {}] must cover [-{half}, {half}]",
            grid.x_min, grid.x_max
        )));
    }
    if grid.t_end != 1.0 {
        return Err(Error::Config(format!("p2 is read at t = 1; grid ends at {}", grid.t_end)));
    }
    Ok(())
}

/// Two-sided capacity `p2(c) = w(1, 0)` from a PDE solve of `1{|x| > c}`.
pub fn p2_numeric(c: f64, band: &VolatilityBand, grid: &GridSpec) -> Result<f64> {
    check_p2_grid(c, band, grid)?;
    let grid = grid.with_levels(1)?;
    let sol = solve(&InitialCondition::IndicatorAbsAbove { c }, band, &grid)?;
    sol.value_at(1, 0.0)
}

/// [`p2_numeric`] on a grid and on its refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P2Numeric {
    /// Value on the refined grid.
    pub value: f64,
    /// Value on the grid as given.
    pub coarse: f64,
    /// Second-order Richardson extrapolation of the two.
    pub extrapolated: f64,
    /// Discretisation tolerance: three times the Richardson residual.
    pub eps_grid: f64,
    pub dx: f64,
    pub nx: usize,
    pub steps: usize,
}

pub fn p2_numeric_with_diagnostics(c: f64, band: &VolatilityBand, grid: &GridSpec) -> Result<P2Numeric> {
    check_p2_grid(c, band, grid)?;
    let grid = grid.with_levels(1)?;
    let fine_grid = grid.refined();
    let ic = InitialCondition::IndicatorAbsAbove { c };
    let (coarse, fine) = rayon::join(|| solve(&ic, band, &grid), || solve(&ic, band, &fine_grid));
    let (coarse, fine) = (coarse?, fine?);
    let (vc, vf) = (coarse.value_at(1, 0.0)?, fine.value_at(1, 0.0)?);
    let residual = (vf - vc).abs() / 3.0;
    Ok(P2Numeric {
        value: vf,
        coarse: vc,
        extrapolated: vf + (vf - vc) / 3.0,
        eps_grid: 3.0 * residual,
        dx: fine_grid.dx(),
        nx: fine_grid.nx,
        steps: fine.steps,
    })
}

/// How a threshold row was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdFlag {
    /// Exactly one sign change on `x > 0`.
    Ok,
    /// No sign change above the rounding floor; threshold reported as `c`.
    Degenerate,
    /// Several sign changes; the one nearest `c` is reported.
    Multiple,
    /// `σ̲ = σ̄`: the policy never switches, the row is informational.
    Classical,
}

impl std::fmt::Display for ThresholdFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ok => "ok",
            Self::Degenerate => "degenerate",
            Self::Multiple => "multiple",
            Self::Classical => "classical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub time_remaining: f64,
    pub threshold: f64,
    pub flag: ThresholdFlag,
}

/// Switching loci of the two-sided policy, sorted by `time_remaining`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    /// Kink of the initial data, `σ̄·Φ⁻¹(1 − α/2)`.
    pub c: f64,
    pub rows: Vec<ThresholdRow>,
}

impl ThresholdTable {
    /// Threshold of the row whose `time_remaining` is nearest `tau`
    /// (ties go to the earlier row).
    pub fn lookup(&self, tau: f64) -> f64 {
        let k = self.rows.partition_point(|r| r.time_remaining < tau);
        let below = k.checked_sub(1).map(|i| &self.rows[i]);
        let above = self.rows.get(k);
        match (below, above) {
            (Some(b), Some(a)) => {
                if tau - b.time_remaining <= a.time_remaining - tau {
                    b.threshold
                } else {
                    a.threshold
                }
            }
            (Some(r), None) | (None, Some(r)) => r.threshold,
            (None, None) => self.c,
        }
    }
}

/// Sign changes of `D²w` on `x > 0`, located by linear interpolation
/// between the bracketing nonzero-sign nodes.
fn sign_changes(grid: &GridSpec, u: &[f64], inv_dx2: f64) -> Vec<f64> {
    let d = second_difference(u, inv_dx2);
    let floor = noise_floor(u, inv_dx2);
    let mut roots = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for (j, &dj) in d.iter().enumerate().take(grid.nx - 1).skip(1) {
        let x = grid.x(j);
        if x <= 0.0 || dj.abs() <= floor {
            continue;
        }
        if let Some((xp, dp)) = prev {
            if dp.signum() != dj.signum() {
                roots.push(xp + (x - xp) * dp / (dp - dj));
            }
        }
        prev = Some((x, dj));
    }
    roots
}

fn threshold_row(c: f64, classical: bool, tau: f64, roots: &[f64]) -> ThresholdRow {
    let nearest = roots
        .iter()
        .copied()
        .min_by(|a, b| (a - c).abs().total_cmp(&(b - c).abs()));
    let (threshold, flag) = match (nearest, roots.len()) {
        (None, _) => (c, ThresholdFlag::Degenerate),
        (Some(r), 1) => (r, ThresholdFlag::Ok),
        (Some(r), _) => (r, ThresholdFlag::Multiple),
    };
    let flag = if classical { ThresholdFlag::Classical } else { flag };
    ThresholdRow { time_remaining: tau, threshold, flag }
}

/// Default grid for threshold extraction.
pub fn threshold_grid(band: &VolatilityBand, alpha: Probability, n_steps: usize) -> Result<GridSpec> {
    let c = threshold_kink(band, alpha)?;
    GridSpec::aligned(c, c + 10.0 * band.sigma_hi(), 0.01, 1.0)?.with_levels(n_steps)
}

fn threshold_kink(band: &VolatilityBand, alpha: Probability) -> Result<f64> {
    let a = alpha.value();
    if !(a > 0.0 && a < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {a}")));
    }
    Ok(band.sigma_hi() * norm_quantile(1.0 - 0.5 * a)?)
}

/// Positive roots of `w_xx = 0` at `time_remaining = k/n_steps`,
/// `k = 1..=n_steps`, where `w` solves the G-heat equation from
/// `1{|x| > σ̄·Φ⁻¹(1 − α/2)}`.
pub fn two_sided_threshold(band: &VolatilityBand, alpha: Probability, n_steps: usize) -> Result<ThresholdTable> {
    let grid = threshold_grid(band, alpha, n_steps)?;
    two_sided_threshold_on(band, alpha, &grid)
}

/// [`two_sided_threshold`] on an explicit grid; one row per retained level.
pub fn two_sided_threshold_on(band: &VolatilityBand, alpha: Probability, grid: &GridSpec) -> Result<ThresholdTable> {
    let c = threshold_kink(band, alpha)?;
    let ic = InitialCondition::IndicatorAbsAbove { c };
    let inv_dx2 = grid.dx().powi(-2);
    let classical = band.is_classical();
    let mut rows = Vec::with_capacity(grid.levels);
    march(&ic, band, grid, |level, t, u| {
        if level > 0 {
            rows.push(threshold_row(c, classical, t, &sign_changes(grid, u, inv_dx2)));
        }
    })?;
    Ok(ThresholdTable { c, rows })
}

/// Sandwich check at one retained level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichLevel {
    pub t: f64,
    /// Smallest `u + v − w` over the nodes.
    pub min_gap: f64,
    /// Largest `u + v − w` over the nodes.
    pub max_gap: f64,
    /// Upper bound on the gap at this time.
    pub bound: f64,
    /// Max difference between the coarse and the pair-averaged fine solution.
    pub eps_grid: f64,
}

impl SandwichLevel {
    /// `ε − (−min_gap)`: nonnegative when the lower bound holds.
    pub fn lower_margin(&self) -> f64 {
        self.eps_grid + self.min_gap
    }

    /// `bound + ε − max_gap`: nonnegative when the upper bound holds.
    pub fn upper_margin(&self) -> f64 {
        self.bound + self.eps_grid - self.max_gap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub c: f64,
    /// Largest `w − (u + v)` seen, zero if none.
    pub max_lower_violation: f64,
    /// Smallest `bound − (u + v − w)` seen.
    pub min_upper_slack: f64,
    /// Largest per-level tolerance.
    pub eps_grid: f64,
    pub worst_lower_margin: f64,
    pub worst_upper_margin: f64,
    pub holds: bool,
    pub levels: Vec<SandwichLevel>,
}

/// Check `0 ≤ u + v − w ≤ bound(t)` on every retained level `t > 0`.
///
/// `w` is solved on `grid` and on its refinement; the gap is measured on the
/// refined grid and the tolerance at each level is the largest coarse/fine
/// discrepancy there. A failure is reported through `holds`, not an error.
pub fn verify_sandwich(c: f64, band: &VolatilityBand, grid: &GridSpec) -> Result<SandwichReport> {
    band.require_positive()?;
    grid.validate()?;
    let floor = 0.5 * band.sigma_hi() * grid.t_end.sqrt();
    if !(c > floor) {
        return Err(Error::Precondition(format!("sandwich needs c > sigma_hi*sqrt(t_end)/2 = {floor}, got {c}")));
    }
    let fine_grid = grid.refined();
    let ic = InitialCondition::IndicatorAbsAbove { c };
    let (coarse, fine) = rayon::join(|| solve(&ic, band, grid), || solve(&ic, band, &fine_grid));
    let (coarse, fine) = (coarse?, fine?);
    let xs = fine_grid.nodes();

    let mut levels = Vec::with_capacity(grid.levels);
    for l in 1..coarse.n_levels() {
        let t = coarse.times[l];
        let (wc, wf) = (coarse.level(l), fine.level(l));
        let eps_grid = wc
            .iter()
            .enumerate()
            .map(|(j, &v)| (0.5 * (wf[2 * j] + wf[2 * j + 1]) - v).abs())
            .fold(0.0, f64::max);
        let s = t.sqrt();
        let (mut min_gap, mut max_gap) = (f64::INFINITY, f64::NEG_INFINITY);
        for (&x, &w) in xs.iter().zip(wf) {
            let gap = profile_value((x - c) / s, band) + profile_value((-x - c) / s, band) - w;
            min_gap = min_gap.min(gap);
            max_gap = max_gap.max(gap);
        }
        levels.push(SandwichLevel { t, min_gap, max_gap, bound: two_sided_error_bound(c, t, band)?, eps_grid });
    }

    let fold = |f: fn(&SandwichLevel) -> f64| levels.iter().map(f).fold(f64::INFINITY, f64::min);
    let worst_lower_margin = fold(SandwichLevel::lower_margin);
    let worst_upper_margin = fold(SandwichLevel::upper_margin);
    Ok(SandwichReport {
        c,
        max_lower_violation: levels.iter().map(|l| -l.min_gap).fold(0.0, f64::max),
        min_upper_slack: fold(|l| l.bound - l.max_gap),
        eps_grid: levels.iter().map(|l| l.eps_grid).fold(0.0, f64::max),
        worst_lower_margin,
        worst_upper_margin,
        holds: worst_lower_margin >= 0.0 && worst_upper_margin >= 0.0,
        levels,
    })
}
