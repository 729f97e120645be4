//! Accuracy contracts for the normal and Student-t functions.
//!
//! Frozen reference values were evaluated with 40-digit arithmetic. The
//! bisection and quadrature oracles below are independent of the library's
//! quantile and incomplete-beta code paths.

use gnormal_core::special_fn::{norm_cdf, norm_pdf, norm_quantile, t_cdf, t_quantile};

/// Bisection on a monotone CDF; independent of the Newton/Halley refinements.
fn bisect(cdf: impl Fn(f64) -> f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs() {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Composite Simpson rule.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 1 { n + 1 } else { n };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn normal_cdf_reference_values() {
    let cases = [
        (-8.0, 6.220_960_574_271_784e-16),
        (-5.0, 2.866_515_718_791_939e-7),
        (-1.5, 0.066_807_201_268_858_07),
        (0.3, 0.617_911_422_188_952_6),
        (1.0, 0.841_344_746_068_543),
        (3.0, 0.998_650_101_968_369_9),
        (6.0, 0.999_999_999_013_412_4),
    ];
    for (x, want) in cases {
        let got = norm_cdf(x);
        assert!((got - want).abs() <= 1e-14, "x={x} got={got} want={want}");
    }
    // Tail stays relatively accurate too.
    assert!((norm_cdf(-8.0) / 6.220_960_574_271_784e-16 - 1.0).abs() < 1e-13);
    assert!((norm_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-16);
}

#[test]
fn normal_cdf_is_symmetric() {
    let mut x = -8.0;
    while x <= 8.0 {
        let s = norm_cdf(x) + norm_cdf(-x) - 1.0;
        assert!(s.abs() <= 1e-15, "x={x} residual={s}");
        x += 0.0137;
    }
}

#[test]
fn normal_cdf_is_monotone() {
    let mut prev = 0.0;
    let mut x = -10.0;
    while x <= 10.0 {
        let v = norm_cdf(x);
        assert!(v >= prev, "x={x}");
        prev = v;
        x += 0.001;
    }
}

#[test]
fn pdf_is_derivative_of_cdf() {
    let h = 1e-5;
    let mut x = -6.0;
    while x <= 6.0 {
        let fd = (norm_cdf(x + h) - norm_cdf(x - h)) / (2.0 * h);
        assert!((fd - norm_pdf(x)).abs() <= 1e-9, "x={x}");
        x += 0.05;
    }
}

#[test]
fn normal_quantile_against_bisection() {
    for (p, frozen) in [
        (0.975, 1.959_963_984_540_054),
        (0.95, 1.644_853_626_951_472_2),
        (0.995, 2.575_829_303_548_900_4),
    ] {
        let q = norm_quantile(p).unwrap();
        let oracle = bisect(norm_cdf, p, -40.0, 40.0);
        assert!((q - frozen).abs() < 2e-15, "p={p} q={q}");
        assert!((q - oracle).abs() < 1e-13, "p={p} q={q} oracle={oracle}");
    }
}

#[test]
fn normal_quantile_round_trip_log_grid() {
    let mut worst: f64 = 0.0;
    for k in 0..=400 {
        // log-spaced from 1e-10 up to 0.5, mirrored into the upper half
        let p = 10f64.powf(-10.0 + k as f64 * (10.0 - 0.5f64.log10().abs()) / 400.0).min(0.5);
        for p in [p, 1.0 - p] {
            if (1e-10..=1.0 - 1e-10).contains(&p) {
                let q = norm_quantile(p).unwrap();
                worst = worst.max((norm_cdf(q) - p).abs());
            }
        }
    }
    assert!(worst <= 1e-12, "worst round trip {worst}");
}

#[test]
fn t_cdf_reference_values() {
    let cases = [
        (1.972, 199, 0.975_002_499_964_057_8),
        (2.0, 5, 0.949_030_260_585_070_8),
        (-0.7, 19, 0.246_205_044_112_468_56),
        (2.5, 3, 0.956_146_676_495_967_2),
        (1.0, 1, 0.75),
    ];
    for (x, df, want) in cases {
        let got = t_cdf(x, df).unwrap();
        assert!((got - want).abs() < 1e-13, "x={x} df={df} got={got} want={want}");
    }
}

#[test]
fn t_cdf_against_quadrature_of_unnormalised_density() {
    for (x, df) in [(1.3f64, 4u32), (-2.2, 9), (0.4, 30)] {
        let nu = df as f64;
        let kernel = |s: f64| (1.0 + s * s / nu).powf(-(nu + 1.0) / 2.0);
        // Substitute s = tan(θ) so the infinite range becomes (-π/2, π/2).
        let dens = |th: f64| {
            let s = th.tan();
            kernel(s) / th.cos().powi(2)
        };
        let half = std::f64::consts::FRAC_PI_2;
        let total = simpson(dens, -half + 1e-12, half - 1e-12, 20_000);
        let part = simpson(dens, -half + 1e-12, x.atan(), 20_000);
        let oracle = part / total;
        let got = t_cdf(x, df).unwrap();
        assert!((got - oracle).abs() < 1e-9, "x={x} df={df} got={got} oracle={oracle}");
    }
}

#[test]
fn t_cdf_symmetry_and_monotonicity() {
    for df in [1u32, 2, 5, 19, 199, 5000] {
        let mut prev = 0.0;
        let mut x = -30.0;
        while x <= 30.0 {
            let a = t_cdf(x, df).unwrap();
            let b = t_cdf(-x, df).unwrap();
            assert!((a + b - 1.0).abs() < 1e-15, "df={df} x={x}");
            assert!(a >= prev, "df={df} x={x}");
            prev = a;
            x += 0.173;
        }
    }
}

#[test]
fn t_cdf_tends_to_normal() {
    let mut x = -4.0;
    while x <= 4.0 {
        let diff = t_cdf(x, 1_000_000).unwrap() - norm_cdf(x);
        assert!(diff.abs() <= 1e-6, "x={x} diff={diff}");
        x += 0.05;
    }
}

#[test]
fn t_quantile_against_bisection() {
    for (p, df) in [(0.975, 19u32), (0.975, 199), (0.95, 9), (0.999, 2), (1e-8, 3), (0.6, 1)] {
        let q = t_quantile(p, df).unwrap();
        let oracle = bisect(|x| t_cdf(x, df).unwrap(), p, -1e9, 1e9);
        assert!((q - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "p={p} df={df}");
        assert!((t_cdf(q, df).unwrap() - p).abs() <= 1e-10, "p={p} df={df}");
    }
    // Frozen 40-digit values.
    assert!((t_quantile(0.975, 19).unwrap() - 2.093_024_054_408_309_8).abs() < 1e-12);
    assert!((t_quantile(0.975, 199).unwrap() - 1.971_956_544_251_753_8).abs() < 1e-12);
}

#[test]
fn t_quantile_critical_value_for_n_200() {
    let q = t_quantile(0.975, 199).unwrap();
    assert_eq!((q * 100.0).round() / 100.0, 1.97);
}
