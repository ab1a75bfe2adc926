//! Decay regimes of a rate law, asymptotic predictions for `Q^[n]`, and
//! verification of decay bounds on simulated trajectories.

mod bounds;
mod counterexample;
mod kl;

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::Serialize;

pub use bounds::{check_decay_bounds, ges_check, BoundMode, BoundRow, DecayBoundReport, GesReport};
pub use counterexample::{construct_superexp_counterexample, smoothed_minorant, Counterexample, CounterexampleRow};
pub use kl::{kl_envelope, KlEnvelope, KlSamples};

use crate::error::{Error, Result};
use crate::numeric::{self, FRAC_1_SQRT_2, SQRT_2};
use crate::rate_law::{QIterates, RateLaw};

const REGIME_TOL: f64 = 1e-9;
/// Estimated derivatives inside this band around 0 or 1 cannot be classified.
const AMBIGUOUS_BAND: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Regime {
    QPrimeZero,
    QPrimeBetween { q_prime: f64, lambda: f64 },
    QPrimeOne { params: Option<SuperExpParams> },
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::QPrimeZero => "QPrimeZero",
            Regime::QPrimeBetween { .. } => "QPrimeBetween",
            Regime::QPrimeOne { .. } => "QPrimeOne",
        }
    }
}

/// A horizon-qualified fit against a closed-form prediction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticFit {
    pub regime: Regime,
    pub fitted_constant: f64,
    pub prediction: f64,
    pub residual: f64,
    pub horizon: usize,
    pub details: BTreeMap<String, f64>,
}

pub fn classify_regime(q: &RateLaw) -> Result<Regime> {
    let (v, exact) = q.q_prime_at_zero();
    let between = |v: f64| Regime::QPrimeBetween { q_prime: v, lambda: 2.0 * v.atanh() };
    if exact {
        return Ok(match v {
            v if v == 0.0 => Regime::QPrimeZero,
            v if v == 1.0 => Regime::QPrimeOne { params: None },
            v if v > 0.0 && v < 1.0 => between(v),
            _ => {
                return Err(Error::RegimeMismatch { expected: "q'(0) in [0, 1]".into(), found: format!("q'(0) = {v}") })
            }
        });
    }
    if v.abs() <= REGIME_TOL {
        Ok(Regime::QPrimeZero)
    } else if (v - 1.0).abs() <= REGIME_TOL {
        Ok(Regime::QPrimeOne { params: None })
    } else if v.abs() <= AMBIGUOUS_BAND || (v - 1.0).abs() <= AMBIGUOUS_BAND {
        Err(Error::AmbiguousRegime { q_prime: v })
    } else if v > 0.0 && v < 1.0 {
        Ok(between(v))
    } else {
        Err(Error::RegimeMismatch { expected: "q'(0) in [0, 1]".into(), found: format!("q'(0) = {v}") })
    }
}

/// Integrand of `F` in the variable `u = ln xi`: `1/(2 q(s)/s)` at `s = sqrt2 e^u`.
fn f_integrand(q: &RateLaw) -> impl Fn(f64) -> f64 + '_ {
    let shift = 0.5 * LN_2;
    move |u| 0.5 * (-q.log_ratio(u + shift)).exp()
}

fn check_f_domain(q: &RateLaw, x0: f64, z: f64) -> Result<()> {
    let top = q.radius() * FRAC_1_SQRT_2;
    if !(z > 0.0 && z <= x0 && x0 <= top * (1.0 + 1e-12)) {
        return Err(Error::HypothesisMismatch(format!("need 0 < z = {z} <= x0 = {x0} <= M/sqrt2 = {top}")));
    }
    Ok(())
}

fn integrate_log(q: &RateLaw, z_lo: f64, z_hi: f64) -> Result<f64> {
    let (v, err) = numeric::integrate(f_integrand(q), z_lo.ln(), z_hi.ln(), 1e-10);
    if !v.is_finite() || err > 1e-7 * v.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::QuadratureFailure { z: z_lo, estimate: err });
    }
    Ok(v)
}

/// `F(z) = \int_z^{x0} d xi / (sqrt2 q(sqrt2 xi))`.
#[allow(non_snake_case)]
pub fn F_integral(q: &RateLaw, x0: f64, z: f64) -> Result<f64> {
    check_f_domain(q, x0, z)?;
    if z == x0 {
        return Ok(0.0);
    }
    integrate_log(q, z, x0)
}

/// The `z` with `F(z) = n`.
#[allow(non_snake_case)]
pub fn F_inverse(q: &RateLaw, x0: f64, n: f64) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(Error::BracketFailure { n });
    }
    check_f_domain(q, x0, x0)?;
    if n == 0.0 {
        return Ok(x0);
    }
    let mut eps = 0.5 * x0;
    while F_integral(q, x0, eps)? < n {
        eps *= 1e-2;
        if eps < 1e-300 {
            return Err(Error::BracketFailure { n });
        }
    }
    let (x0_ln, eps_ln) = (x0.ln(), eps.ln());
    let mut failure = None;
    let m = numeric::bisect(
        |m| match F_integral(q, x0, m.exp().min(x0)) {
            Ok(v) => v - n,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        eps_ln,
        x0_ln,
        1e-12,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    m.map(f64::exp).ok_or(Error::BracketFailure { n })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivReport {
    /// Largest `F(z) qbar(z) / z` seen on the grid.
    pub bound: f64,
    pub satisfied: bool,
    /// Max over the last decade divided by the max over everything before it.
    pub last_decade_growth: f64,
    pub samples: Vec<(f64, f64)>,
}

/// Samples `F(z) qbar(z)/z` on a log grid from `x0` down to `1e-8`.
pub fn check_equiv_condition(q: &RateLaw, x0: f64, points: usize) -> Result<EquivReport> {
    check_f_domain(q, x0, x0)?;
    let z_min = 1e-8;
    let grid = numeric::log_grid_desc(x0, z_min, points.max(20));
    let mut f = 0.0;
    let mut prev = x0;
    let mut samples = Vec::with_capacity(grid.len());
    for &z in &grid {
        if z < prev {
            f += integrate_log(q, z, prev)?;
            prev = z;
        }
        let qbar = SQRT_2 * q.q(SQRT_2 * z);
        samples.push((z, f * qbar / z));
    }
    let bound = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let split = z_min * 10.0;
    let head = samples.iter().filter(|s| s.0 > split).map(|s| s.1).fold(0.0, f64::max);
    let tail = samples.iter().filter(|s| s.0 <= split).map(|s| s.1).fold(0.0, f64::max);
    let growth = if head > 0.0 { tail / head } else { 1.0 };
    let satisfied = bound.is_finite() && growth <= 1.0 + 1e-3;
    Ok(EquivReport { bound, satisfied, last_decade_growth: growth, samples })
}

/// `lambda = 2 artanh(q'(0))`.
pub fn lambda_rate(q: &RateLaw) -> Result<f64> {
    match classify_regime(q)? {
        Regime::QPrimeBetween { lambda, .. } => Ok(lambda),
        other => Err(Error::RegimeMismatch { expected: "QPrimeBetween".into(), found: other.name().into() }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsiSum {
    pub partial: f64,
    pub converged: bool,
    pub terms: usize,
    /// Geometric tail estimate from the ratio of the last two terms.
    pub tail_estimate: f64,
}

/// `psi(r) = sup_{0 < s <= r} |q(s)/s - q'(0)|` on a log grid.
fn psi(q: &RateLaw, q0: f64, r: f64) -> f64 {
    numeric::log_grid_desc(r, r * 1e-12, 120)
        .into_iter()
        .map(|s| (q.log_ratio(s.ln()).exp() - q0).abs())
        .fold(0.0, f64::max)
}

/// Partial sums of `psi(e^{-lambda k / 2})` for `k < terms`.
pub fn psi_sum_check(q: &RateLaw, lambda: f64, terms: usize) -> Result<PsiSum> {
    let q0 = match classify_regime(q)? {
        Regime::QPrimeBetween { q_prime, .. } => q_prime,
        other => return Err(Error::RegimeMismatch { expected: "QPrimeBetween".into(), found: other.name().into() }),
    };
    let vals: Vec<f64> = (0..terms.max(2)).map(|k| psi(q, q0, (-0.5 * lambda * k as f64).exp())).collect();
    let partial = vals.iter().sum::<f64>();
    let (a, b) = (vals[vals.len() - 2], vals[vals.len() - 1]);
    let (converged, tail_estimate) = if b == 0.0 {
        (partial.is_finite(), 0.0)
    } else {
        let ratio = b / a;
        if ratio < 1.0 - 1e-3 {
            (true, b * ratio / (1.0 - ratio))
        } else {
            (false, f64::INFINITY)
        }
    };
    Ok(PsiSum { partial, converged, terms: vals.len(), tail_estimate })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuperExpParams {
    pub c_star: f64,
    pub alpha: f64,
    pub x_star: f64,
    pub mu_star: f64,
    /// First index with `Q^[n](x0) <= x*/sqrt2`.
    pub n2: usize,
    pub r2: f64,
}

impl SuperExpParams {
    /// `-ln` of the bound `C*^{-1/alpha} e^{-mu* (1 + alpha)^n}`.
    pub fn bound_neg_log(&self, n: usize) -> f64 {
        self.c_star.ln() / self.alpha + self.mu_star * (1.0 + self.alpha).powi(n as i32)
    }

    /// First `n` at which the iterates violate the bound, if any.
    pub fn first_violation(&self, it: &QIterates) -> Option<usize> {
        it.neg_log.iter().enumerate().find(|&(n, &nl)| nl < self.bound_neg_log(n) * (1.0 - 1e-12)).map(|(n, _)| n)
    }
}

/// Fits `|q(x) - x| ~ C* 2^{-alpha/2} x^{1+alpha}` on `x_range` and derives
/// the double-exponential bound for the iterates from `x0`.
pub fn superexp_params(q: &RateLaw, x_range: (f64, f64), x0: f64, horizon: usize) -> Result<SuperExpParams> {
    match classify_regime(q)? {
        Regime::QPrimeOne { .. } => {}
        other => return Err(Error::RegimeMismatch { expected: "QPrimeOne".into(), found: other.name().into() }),
    }
    let (lo, hi) = x_range;
    let grid = numeric::log_grid_desc(hi, lo, 80);
    let lx: Vec<f64> = grid.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = lx.iter().map(|&l| l + q.log_defect(l)).collect();
    let (slope, _, r2) = numeric::ols(&lx, &ly);
    if !(r2 >= 0.99) || !(slope > 1.0) {
        return Err(Error::FitFailure { r2 });
    }
    let alpha = slope - 1.0;
    let ln_c =
        lx.iter().zip(&ly).map(|(&l, &y)| y - (1.0 + alpha) * l).fold(f64::NEG_INFINITY, f64::max) + 0.5 * alpha * LN_2;
    let c_star = ln_c.exp();
    let x_star = (0.99 * (-ln_c / alpha).exp()).min(hi);
    let it = q.iterate(x0, horizon)?;
    let target = -(x_star * FRAC_1_SQRT_2).ln();
    let n2 = it.neg_log.iter().position(|&nl| nl >= target).ok_or_else(|| Error::ConstructionFailure {
        stage: "n2".into(),
        detail: format!("iterates never reach x*/sqrt2 within {horizon} steps"),
    })?;
    let mu_star = -(x_star.ln() + ln_c / alpha) / (1.0 + alpha).powi(n2 as i32);
    Ok(SuperExpParams { c_star, alpha, x_star, mu_star, n2, r2 })
}

/// `N + 1` iterates of `Q` from `x0`, requiring `0 < x0 <= M/sqrt2`.
pub fn iterate_q(q: &RateLaw, x0: f64, n: usize) -> Result<QIterates> {
    check_f_domain(q, x0, x0)?;
    q.iterate(x0, n)
}

/// Leading-order exponent `(2(p+1))^{1/(p+1)}` for `q(x) = x/(-ln x)^p`.
pub fn leading_exponent(p: f64) -> f64 {
    (2.0 * (p + 1.0)).powf(1.0 / (p + 1.0))
}

/// Compares `(-ln(sqrt2 x_n)) / n^{1/(p+1)}` with its predicted limit; for
/// `p < 1/2` the next correction is fitted against `n^{(1-2p)/(p+1)}` over
/// `n in [N/10, N]`.
pub fn logpow_prediction(p: f64, x0: f64, horizon: usize) -> Result<AsymptoticFit> {
    if !(p > 0.0) || horizon < 10 {
        return Err(Error::RegimeMismatch {
            expected: "p > 0 and N >= 10".into(),
            found: format!("p = {p}, N = {horizon}"),
        });
    }
    let q = RateLaw::logpow(p);
    let it = iterate_q(&q, x0, horizon)?;
    let a0 = leading_exponent(p);
    let e = 1.0 / (p + 1.0);
    let shifted = |n: usize| it.neg_log[n] - 0.5 * LN_2;
    let ratio = shifted(horizon) / (horizon as f64).powf(e);
    let mut details = BTreeMap::new();
    let xi = 1.0 / shifted(horizon);
    details.insert("scaled_ratio".to_string(), xi.powf(-(p + 1.0)) / (a0.powf(p + 1.0) * horizon as f64));
    if p < 0.5 {
        let ce = (1.0 - 2.0 * p) / (p + 1.0);
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            (horizon / 10..=horizon).map(|n| ((n as f64).powf(ce), shifted(n) - a0 * (n as f64).powf(e))).unzip();
        let (slope, _, r2) = numeric::ols(&xs, &ys);
        details.insert("alpha1_fit".to_string(), slope);
        details.insert("alpha1_r2".to_string(), r2);
    }
    if let Some(k) = it.underflow_from {
        details.insert("underflow_from".to_string(), k as f64);
    }
    Ok(AsymptoticFit {
        regime: Regime::QPrimeZero,
        fitted_constant: ratio,
        prediction: a0,
        residual: (ratio - a0).abs(),
        horizon,
        details,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(&RateLaw::power(2.0)).unwrap(), Regime::QPrimeZero);
        assert_eq!(classify_regime(&RateLaw::logpow(1.0)).unwrap(), Regime::QPrimeZero);
        match classify_regime(&RateLaw::linear(0.5)).unwrap() {
            Regime::QPrimeBetween { q_prime, lambda } => {
                assert_eq!(q_prime, 0.5);
                assert!((lambda - 3f64.ln()).abs() < 1e-15);
                assert!(((-lambda).exp() - 1.0 / 3.0).abs() < 1e-12);
            }
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn f_integral_square_law() {
        let q = RateLaw::power(2.0);
        let x0 = 0.1;
        for z in [1e-6, 1e-3, 0.05] {
            let exact = (1.0 / z - 1.0 / x0) / (2.0 * SQRT_2);
            let v = F_integral(&q, x0, z).unwrap();
            assert!((v - exact).abs() <= 1e-10 * exact, "{z}: {v} vs {exact}");
        }
        assert_eq!(F_integral(&q, x0, x0).unwrap(), 0.0);
    }

    #[test]
    fn f_inverse_pairs() {
        let q = RateLaw::power(2.0);
        assert_eq!(F_inverse(&q, 0.1, 0.0).unwrap(), 0.1);
        let z = F_inverse(&q, 0.1, 1e4).unwrap();
        assert!((F_integral(&q, 0.1, z).unwrap() - 1e4).abs() <= 1e-8 * 1e4);
        assert!((z * 2.0 * SQRT_2 * 1e4 - 1.0).abs() < 0.01);
    }

    #[test]
    fn equiv_condition() {
        let r = check_equiv_condition(&RateLaw::power(2.0), 0.1, 200).unwrap();
        assert!(r.satisfied && r.bound <= 1.0 + 1e-9, "{r:?}");
        let r = check_equiv_condition(&RateLaw::logpow(1.0), 0.1, 200).unwrap();
        assert!(!r.satisfied, "{}", r.last_decade_growth);
    }

    #[test]
    fn psi_sums() {
        let q = RateLaw::linquad(0.5);
        let s = psi_sum_check(&q, 3f64.ln(), 60).unwrap();
        assert!(s.converged);
        let geometric: f64 = (0..60).map(|k| (-0.5 * 3f64.ln() * k as f64).exp()).sum();
        assert!((s.partial - geometric).abs() < 1e-9 * geometric);
        let s = psi_sum_check(&RateLaw::linear(0.5), 3f64.ln(), 20).unwrap();
        assert_eq!(s.partial, 0.0);
        assert!(s.converged);
    }

    #[test]
    fn superexp_quadratic_defect() {
        let q = RateLaw::superexp(1.0);
        let p = superexp_params(&q, (1e-6, 0.5), 0.3, 40).unwrap();
        assert!((p.alpha - 1.0).abs() < 1e-9);
        assert!((p.c_star - SQRT_2).abs() < 1e-9);
        let it = q.iterate(0.3, 40).unwrap();
        assert_eq!(p.first_violation(&it), None);
    }

    #[test]
    fn iterate_third() {
        let it = iterate_q(&RateLaw::linear(0.5), 0.5, 3).unwrap();
        for (n, v) in it.values.iter().enumerate() {
            let want = 0.5 / 3f64.powi(n as i32);
            assert!((v - want).abs() <= 1e-15 * want);
        }
    }

    #[test]
    fn leading_exponents() {
        assert_eq!(leading_exponent(1.0), 2.0);
        assert!((leading_exponent(2.0) - 6f64.cbrt()).abs() < 1e-15);
    }
}
