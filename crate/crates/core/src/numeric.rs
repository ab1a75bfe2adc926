//! Small numerical kernels shared by the analysis modules.

pub use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

/// Absolute tolerance used wherever a closed formula needs a numerical inverse.
pub const INVERSE_TOL: f64 = 1e-13;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Returns `None` when `f(lo)` and `f(hi)` have the same strict sign. The loop
/// runs until the bracket is narrower than `tol` or cannot shrink any further
/// in floating point, so `tol = 0.0` gives a full-precision root.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..2100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Definite integral by double-exponential quadrature with a relative target.
/// Returns `(value, error_estimate)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    // A first pass sets the scale for the absolute target the integrator expects.
    let rough = quadrature::double_exponential::integrate(&f, a, b, 1e-6);
    let target = (rough.integral.abs() * rel_tol).max(f64::MIN_POSITIVE);
    let out = quadrature::double_exponential::integrate(&f, a, b, target);
    (out.integral, out.error_estimate)
}

/// Ordinary least squares `y = slope * x + intercept`; returns `(slope, intercept, r2)`.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len().min(ys.len()) as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Central difference with one Richardson extrapolation step.
pub fn derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = (f(x + 0.5 * h) - f(x - 0.5 * h)) / h;
    (4.0 * d2 - d1) / 3.0
}

/// One-sided forward difference, used where the function is only defined on `x >= 0`.
pub fn forward_derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let d1 = (f(x + h) - f(x)) / h;
    let d2 = (f(x + 0.5 * h) - f(x)) / (0.5 * h);
    2.0 * d2 - d1
}

/// Formats a float with 17 significant digits, which round-trips every `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{:.16e}", x)
    }
}

/// `n` points geometrically spaced from `hi` down to `lo` (both included).
pub fn log_grid_desc(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    let (lh, ll) = (hi.ln(), lo.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                hi
            } else if i + 1 == n {
                lo
            } else {
                (lh + (ll - lh) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Symmetric grid `extent * k / half` for `k = -half..=half`. Integer multiples
/// of `extent / half` come out exact for the round values used in tests.
pub fn symmetric_grid(extent: f64, half: usize) -> Vec<f64> {
    let h = half as i64;
    (-h..=h).map(|k| extent * k as f64 / half as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 0.0).unwrap();
        assert!((r - SQRT_2).abs() <= 4e-16);
    }

    #[test]
    fn bisect_rejects_no_sign_change() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 0.0).is_none());
    }

    #[test]
    fn integrate_polynomial() {
        let (v, _) = integrate(|x| x * x, 0.0, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-11);
    }

    #[test]
    fn ols_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (s, i, r2) = ols(&xs, &ys);
        assert!((s - 2.0).abs() < 1e-14 && (i + 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn symmetric_grid_hits_integers() {
        let g = symmetric_grid(10.0, 1000);
        assert!(g.contains(&1.0) && g.contains(&-1.0) && g.contains(&0.0));
    }
}
