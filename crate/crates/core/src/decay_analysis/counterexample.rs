//! A rate law with `q'(0) = 1` whose iterates decay no faster than a
//! prescribed `e^{-n phi(n)}`.
//!
//! The construction works with `y = -1/ln x`. A concave `C^1` minorant `psi`
//! of `phi` defines `Psi(x) = 2/(x psi(x))` and `U = -Psi' o Psi^{-1} / 2`, and
//! `Q` is chosen so that `y_{n+1} = y_n - U(y_n)` along every orbit.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{self, SQRT_2};
use crate::rate_law::RateLaw;
use crate::scalar::ScalarFn;

/// Concave piecewise-quadratic minorant built from integer samples of `phi`.
#[derive(Clone, Debug)]
pub struct Minorant {
    /// Values at the integers.
    big: Vec<f64>,
    /// Slopes on `[n, n + 1]`.
    slope: Vec<f64>,
}

/// Builds the minorant from `phi(0..=n_max)`.
///
/// Slopes are kept while the affine continuation stays below `phi` at the next
/// integer and reset to the secant of `phi` otherwise, so the slopes never
/// increase. The corners at the integers are rounded by quadratics on
/// `[n - 1/2, n + 1/2]`.
pub fn smoothed_minorant(phi: &ScalarFn, n_max: usize) -> Result<Minorant> {
    let fail = |detail: String| Error::ConstructionFailure { stage: "minorant".into(), detail };
    let n_max = n_max.max(2);
    let samples: Vec<f64> = (0..=n_max).map(|n| phi.eval(n as f64)).collect();
    if !(samples[0] > 0.0) {
        return Err(fail(format!("phi(0) = {} must be positive", samples[0])));
    }
    if samples.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(fail("phi is not nondecreasing on the integers".into()));
    }
    let mut big = vec![samples[0]];
    let mut slope = vec![samples[1] - samples[0]];
    for n in 1..n_max {
        let f_n = big[n - 1] + slope[n - 1];
        big.push(f_n);
        let keep = f_n + slope[n - 1] <= samples[n + 1];
        slope.push(if keep { slope[n - 1] } else { samples[n + 1] - samples[n] });
    }
    big.push(big[n_max - 1] + slope[n_max - 1]);
    Ok(Minorant { big, slope })
}

impl Minorant {
    fn last(&self) -> usize {
        self.slope.len()
    }

    /// `(psi(x), psi'(x))` for `x >= 0`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let last = self.last();
        if x <= 0.5 {
            return (self.big[0] + self.slope[0] * x, self.slope[0]);
        }
        let n = (x + 0.5).floor() as usize;
        if n >= last {
            let s = self.slope[last - 1];
            return (self.big[last] + s * (x - last as f64), s);
        }
        let s = x - (n as f64 - 0.5);
        let (a, b) = (self.slope[n - 1], self.slope[n]);
        (0.5 * (b - a) * s * s + a * s + self.big[n] - 0.5 * a, (b - a) * s + a)
    }

    /// `Psi(x) = 2/(x psi(x))`.
    pub fn big_psi(&self, x: f64) -> f64 {
        2.0 / (x * self.eval(x).0)
    }

    /// `Psi^{-1}(y)` by bisection.
    pub fn big_psi_inv(&self, y: f64) -> Result<f64> {
        let fail =
            || Error::ConstructionFailure { stage: "inverse".into(), detail: format!("no preimage for y = {y}") };
        if !(y > 0.0 && y.is_finite()) {
            return Err(fail());
        }
        let (mut lo, mut hi) = (1.0, 1.0);
        while self.big_psi(lo) < y {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(fail());
            }
        }
        while self.big_psi(hi) > y {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(fail());
            }
        }
        numeric::bisect(|z| self.big_psi(z) - y, lo, hi, 0.0).ok_or_else(fail)
    }

    /// `U(y) = -Psi'(Z)/2` with `Psi(Z) = y`.
    pub fn u(&self, y: f64) -> Result<f64> {
        let z = self.big_psi_inv(y)?;
        let (p, dp) = self.eval(z);
        Ok((p + z * dp) / (z * p).powi(2))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleRow {
    pub n: usize,
    pub y: f64,
    /// `-ln Q^[n](x_probe) = 1/y_n`.
    pub neg_log: f64,
    /// `n phi(n) + ln Q^[n](x_probe)`.
    pub margin: f64,
    /// `|y_{n+1} - (y_n - U(y_n))|`, with `y_{n+1}` obtained through the rate law.
    pub recursion_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample {
    #[serde(skip)]
    pub law: RateLaw,
    pub rows: Vec<CounterexampleRow>,
    /// Minimum of the margin column.
    pub floor: f64,
    /// OLS slope of the margin over the last 100 steps (or all, if fewer).
    pub tail_slope: f64,
    pub bounded_below: bool,
    /// Smallest `n0` with `y_n >= Psi(n + n0)` on the whole horizon.
    pub n0: Option<usize>,
    pub max_residual: f64,
    /// `(ln h, Q(h)/h)` for `ln h = -10^k`, showing `Q'(0) = 0`.
    pub slope_probe: Vec<(f64, f64)>,
}

/// Builds the rate law and verifies it on `n <= horizon` from `x_probe`.
pub fn construct_superexp_counterexample(phi: &ScalarFn, x_probe: f64, horizon: usize) -> Result<Counterexample> {
    let minorant = Arc::new(smoothed_minorant(phi, 4 * horizon + 1000)?);
    // Below Psi(1) the map y -> y - U(y) stays positive and decreasing.
    let y_max = minorant.big_psi(1.0);
    let x_max = (-1.0 / y_max).exp();
    if !(x_probe > 0.0 && x_probe <= x_max) {
        return Err(Error::ConstructionFailure {
            stage: "probe".into(),
            detail: format!("x_probe = {x_probe} must lie in (0, {x_max}]"),
        });
    }
    let m = minorant.clone();
    let log_ratio = Arc::new(move |ln_x: f64| {
        let y = -1.0 / ln_x;
        match m.u(y) {
            Ok(u) => -u / (y * (y - u)),
            Err(_) => f64::NAN,
        }
    });
    let law = RateLaw::induced(log_ratio, SQRT_2 * x_max, format!("superexp-counterexample:{}", phi.name()));

    let iter_fail = |n: usize, detail: &str| Error::ConstructionFailure {
        stage: "iterate".into(),
        detail: format!("n = {n}: {detail}"),
    };
    let mut rows = Vec::with_capacity(horizon + 1);
    let mut ln_x = x_probe.ln();
    for n in 0..=horizon {
        let y = -1.0 / ln_x;
        let lr = law.log_q_ratio(ln_x)?;
        if !lr.is_finite() {
            return Err(iter_fail(n, "log ratio is not finite"));
        }
        let next_ln = ln_x + lr;
        let predicted = y - minorant.u(y)?;
        let residual = (-1.0 / next_ln - predicted).abs();
        rows.push(CounterexampleRow {
            n,
            y,
            neg_log: -ln_x,
            margin: n as f64 * phi.eval(n as f64) + ln_x,
            recursion_residual: residual,
        });
        if !(next_ln < ln_x) {
            return Err(iter_fail(n, "iterates stopped decreasing"));
        }
        ln_x = next_ln;
    }
    let floor = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let tail = &rows[rows.len().saturating_sub(100)..];
    let (xs, ys): (Vec<f64>, Vec<f64>) = tail.iter().map(|r| (r.n as f64, r.margin)).unzip();
    let tail_slope = numeric::ols(&xs, &ys).0;
    let max_residual = rows.iter().map(|r| r.recursion_residual).fold(0.0, f64::max);
    let n0 = (0..=100_000usize).find(|&n0| rows.iter().all(|r| r.y >= minorant.big_psi((r.n + n0) as f64)));
    let slope_probe = (1..=8)
        .map(|k| {
            let ln_h = -(10f64.powi(k));
            law.log_q_ratio(ln_h).map(|lr| (ln_h, lr.exp()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Counterexample {
        law,
        rows,
        floor,
        tail_slope,
        bounded_below: floor.is_finite() && tail_slope >= 0.0,
        n0,
        max_residual,
        slope_probe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_phi() -> ScalarFn {
        ScalarFn::closed("ln(2+x)", |x| (2.0 + x).ln())
    }

    #[test]
    fn minorant_is_concave_and_below() {
        let phi = log_phi();
        let m = smoothed_minorant(&phi, 200).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..2000 {
            let x = k as f64 * 0.1;
            let (v, d) = m.eval(x);
            assert!(d <= prev + 1e-15);
            prev = d;
            if x.fract() == 0.0 {
                assert!(v <= phi.eval(x) + 1e-12, "{x}");
            }
        }
        // C^1 across the blend boundaries.
        for n in 1..50 {
            let x = n as f64 + 0.5;
            let (a, da) = m.eval(x - 1e-12);
            let (b, db) = m.eval(x + 1e-12);
            assert!((a - b).abs() < 1e-9 && (da - db).abs() < 1e-9);
        }
    }

    #[test]
    fn log_phi_counterexample() {
        let c = construct_superexp_counterexample(&log_phi(), 0.1, 300).unwrap();
        assert!(c.max_residual <= 1e-8, "{}", c.max_residual);
        assert!(c.bounded_below);
        assert!(c.n0.is_some());
        let ratios: Vec<f64> = c.slope_probe.iter().map(|p| p.1).collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
    }
}
