//! Univariate and bivariate standard normal distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::sync::OnceLock;

use libm::erfc;
use statrs::distribution::{ContinuousCDF, Normal};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

/// `Φ(hi) - Φ(lo)` evaluated on the side that avoids cancellation.
pub fn norm_interval(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        norm_cdf(-lo) - norm_cdf(-hi)
    } else {
        norm_cdf(hi) - norm_cdf(lo)
    }
}

/// Standard normal quantile; `±inf` at 0 and 1.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        Normal::standard().inverse_cdf(p)
    }
}

const GL_POINTS: usize = 10;

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
fn gauss_legendre() -> &'static [(f64, f64); GL_POINTS] {
    static RULE: OnceLock<[(f64, f64); GL_POINTS]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_POINTS;
        let mut rule = [(0.0, 0.0); GL_POINTS];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            rule[i] = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        rule
    })
}

fn gl(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    half * gauss_legendre().iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>()
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, floor: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gl(f, a, m);
    let right = gl(f, m, b);
    let sum = left + right;
    if depth == 0 || (sum - whole).abs() <= tol.max(floor) {
        return sum;
    }
    adaptive(f, a, m, left, 0.5 * tol, floor, depth - 1) + adaptive(f, m, b, right, 0.5 * tol, floor, depth - 1)
}

/// Adaptive Gauss–Legendre quadrature of `f` over `[a, b]` to absolute
/// tolerance `tol`, or rounding level of the integral if that is larger.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let whole = gl(&f, a, b);
    let floor = 16.0 * f64::EPSILON * whole.abs();
    adaptive(&f, a, b, whole, tol, floor, 40)
}

/// `P(X <= a, Y <= b)` for a standard bivariate normal with correlation `rho`.
///
/// With `g(t) = exp(-(a² + b² - 2ab sin t) / (2cos² t))`,
/// `Φ₂(a,b;ρ) = Φ(a)Φ(b) + 1/(2π) ∫₀^{asin ρ} g`. For `|ρ| > 0.5` the
/// integral runs from `asin ρ` to `±π/2` instead, measured from the
/// degenerate limit at `ρ = ±1`; `g` is sharply peaked near `±π/2` when
/// `a ≈ ±b`, and the shorter interval keeps the quadrature cheap.
pub fn bivariate_normal_cdf(a: f64, b: f64, rho: f64) -> f64 {
    if a.is_nan() || b.is_nan() || rho.is_nan() {
        return f64::NAN;
    }
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::INFINITY {
        return norm_cdf(b);
    }
    if b == f64::INFINITY {
        return norm_cdf(a);
    }
    let upper = norm_cdf(a.min(b));
    let lower = (norm_cdf(a) + norm_cdf(b) - 1.0).max(0.0);
    if rho >= 1.0 {
        return upper;
    }
    if rho <= -1.0 {
        return lower;
    }
    let base = norm_cdf(a) * norm_cdf(b);
    if rho == 0.0 {
        return base;
    }
    // a² + b² - 2ab sin t = (a∓b)² ± 2ab(1 ∓ sin t), with 1 ∓ sin t = cos² t / (1 ± sin t).
    let (dm, dp, ab) = ((a - b) * (a - b), (a + b) * (a + b), a * b);
    let g = |t: f64| {
        let (s, c) = t.sin_cos();
        let c2 = c * c;
        if c2 <= 0.0 {
            0.0
        } else if s >= 0.0 {
            (-dm / (2.0 * c2) - ab / (1.0 + s)).exp()
        } else {
            (-dp / (2.0 * c2) + ab / (1.0 - s)).exp()
        }
    };
    const TOL: f64 = 1e-13;
    let theta = rho.asin();
    let v = if rho > 0.5 {
        upper - integrate(g, theta, FRAC_PI_2, TOL) / (2.0 * PI)
    } else if rho < -0.5 {
        lower + integrate(g, -FRAC_PI_2, theta, TOL) / (2.0 * PI)
    } else {
        base + integrate(g, 0.0, theta, TOL) / (2.0 * PI)
    };
    v.clamp(lower, upper)
}
