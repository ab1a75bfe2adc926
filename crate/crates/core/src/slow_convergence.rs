//! Initial data whose energy decays slower than any prescribed rate under
//! saturation-type damping.
//!
//! For a map with `|x| - C <= |y| <= |x|`, a profile taking the value
//! `C k^{1/p}` on `(a_{k+1}, a_k]` loses at most `C` per step on each cell,
//! and the widths `a_k` are tuned so that `|g_n|_p >= phi(2(n - 1))`.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::riemann_core::{Norm, Retention, SimpleProfile, Trajectory};
use crate::scalar::{split_tag, PiecewiseLinear, ScalarFn};

/// Upper limit on the automatic truncation search.
const K_SEARCH_CAP: usize = 20_000_000;

#[derive(Clone, Debug)]
pub struct SlowSpec {
    /// Decreasing positive target rate with limit 0.
    pub phi: ScalarFn,
    /// Finite norm exponent, at least 1.
    pub p: f64,
    /// Decrease allowed per step, `|x| - c <= |y|`.
    pub c: f64,
    /// Number of nonzero cells; `None` picks the smallest `K` with tail below `1e-4 b_0`.
    pub k_max: Option<usize>,
}

/// Parses `inv-poly:k[:c]` (`(t + c)^{-k}`, `c` defaults to 1), `inv-log`
/// (`1/ln(t + e)`) or `custom-table:PATH`.
pub fn phi_from_tag(tag: &str) -> Result<ScalarFn> {
    let (head, args) = split_tag(tag)?;
    let bad = || Error::UnknownTag(tag.to_string());
    match head {
        "inv-poly" => {
            let k = *args.first().ok_or_else(bad)?;
            let c = args.get(1).copied().unwrap_or(1.0);
            if !(k > 0.0 && c > 0.0) {
                return Err(bad());
            }
            Ok(ScalarFn::closed(tag, move |t| (t + c).powf(-k)))
        }
        "inv-log" => Ok(ScalarFn::closed(tag, |t| 1.0 / (t + std::f64::consts::E).ln())),
        "custom-table" => {
            let path = tag.split_once(':').map(|(_, p)| p).unwrap_or_default();
            Ok(ScalarFn::table(tag, PiecewiseLinear::from_csv(Path::new(path))?))
        }
        _ => Err(bad()),
    }
}

impl SlowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidProfile(format!("p = {} must be finite and at least 1", self.p)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidProfile(format!("c = {} must be positive", self.c)));
        }
        let samples: Vec<f64> = (0..200).map(|k| self.phi.eval(k as f64 * 0.5)).collect();
        if samples.iter().any(|v| !(*v > 0.0)) || samples.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::MonotonicityViolation(format!(
                "phi '{}' is not positive and decreasing",
                self.phi.name()
            )));
        }
        Ok(())
    }

    /// The rate the sequences are built from:
    /// `3^{p-1} (phi(2(t^{1/p}/3 - 1)) / c)^p` for `t >= 3^p`, continued below
    /// `3^p` by a slowly rising ramp.
    pub fn sequence_rate(&self) -> impl Fn(f64) -> f64 + '_ {
        let p = self.p;
        let knee = 3f64.powf(p);
        let scale = 3f64.powf(p - 1.0);
        let core = move |t: f64| scale * (self.phi.eval(2.0 * (t.powf(1.0 / p) / 3.0 - 1.0)) / self.c).powf(p);
        let at_knee = core(knee);
        move |t: f64| if t >= knee { core(t) } else { at_knee * (1.0 + 1e-3 * (knee - t)) }
    }

    /// Steps over which the truncated profile still carries the bound.
    pub fn horizon(&self, k_max: usize) -> usize {
        ((k_max as f64).powf(1.0 / self.p) / 3.0).floor() as usize
    }
}

/// `b_0 = r(0)`, `b_1 = max(b_0 - 1, r(1))`, `b_n = max(2 b_{n-1} - b_{n-2}, r(n))`;
/// `a_0 = 1`, `a_n = b_{n-1} - b_n`. Both vectors have `n + 1` entries.
pub fn build_sequences(rate: impl Fn(f64) -> f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut b = Vec::with_capacity(n + 1);
    b.push(rate(0.0));
    if n >= 1 {
        b.push((b[0] - 1.0).max(rate(1.0)));
    }
    for k in 2..=n {
        b.push((2.0 * b[k - 1] - b[k - 2]).max(rate(k as f64)));
    }
    let mut a = Vec::with_capacity(n + 1);
    a.push(1.0);
    a.extend(b.windows(2).map(|w| w[0] - w[1]));
    (a, b)
}

#[derive(Clone, Debug, Serialize)]
pub struct SlowProfile {
    #[serde(skip)]
    pub profile: SimpleProfile,
    pub k_max: usize,
    pub horizon: usize,
    pub b0: f64,
    /// `|g_0|_p^p` of the emitted profile, in units where `c = 1`.
    pub mass: f64,
    /// Mass lost to truncation, `b_0 - mass`.
    pub tail: f64,
}

/// Builds `g_0 = c sum_{k <= K} k^{1/p} 1_{(a_{k+1}, a_k]}`, zero elsewhere on `[-1, 1]`.
pub fn build_initial(spec: &SlowSpec) -> Result<SlowProfile> {
    spec.validate()?;
    let rate = spec.sequence_rate();
    let k_max = match spec.k_max {
        Some(k) => k.max(1),
        None => {
            let b0 = rate(0.0);
            let (mut prev2, mut prev1) = (b0, (b0 - 1.0).max(rate(1.0)));
            let mut k = 1;
            while prev1 >= 1e-4 * b0 && k < K_SEARCH_CAP {
                k += 1;
                let next = (2.0 * prev1 - prev2).max(rate(k as f64));
                prev2 = prev1;
                prev1 = next;
            }
            k
        }
    };
    let (a, b) = build_sequences(&rate, k_max + 1);
    let b0 = b[0];
    let p = spec.p;
    // Cells from left to right: [-1, a_{K+1}] is zero, then k = K down to 0.
    let mut bps = vec![-1.0];
    let mut vals = Vec::with_capacity(k_max + 2);
    let mut mass = 0.0;
    let mut push = |lo: f64, hi: f64, v: f64, bps: &mut Vec<f64>| {
        if hi > lo {
            bps.push(hi);
            vals.push(v);
        }
    };
    push(-1.0, a[k_max + 1], 0.0, &mut bps);
    for k in (0..=k_max).rev() {
        let (lo, hi) = (a[k + 1], a[k]);
        let level = (k as f64).powf(1.0 / p);
        mass += k as f64 * (hi - lo);
        push(lo, hi, spec.c * level, &mut bps);
    }
    let tail = b0 - mass;
    if tail > 0.01 * b0 {
        return Err(Error::TruncationTooCoarse { tail, total: b0 });
    }
    let profile = SimpleProfile::new(bps, vals)?;
    Ok(SlowProfile { profile, k_max, horizon: spec.horizon(k_max), b0, mass, tail })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlowRow {
    pub n: usize,
    pub norm: f64,
    /// `phi(2(n - 1))`.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlowReport {
    pub rows: Vec<SlowRow>,
    pub horizon: usize,
    pub holds: bool,
    pub first_violation: Option<usize>,
    /// `e_p(t) >= phi(t)` on the half-integer grid; `None` when profiles were not retained.
    pub window_holds: Option<bool>,
    /// Whether the map keeps `|x| - c <= |y| <= |x|` on the sampled value range.
    pub map_in_region: bool,
}

/// Compares `|g_n|_p` with `phi(2(n - 1))` for `1 <= n <= min(N, horizon)`.
pub fn verify_lower_bound(traj: &Trajectory, spec: &SlowSpec, horizon: usize) -> Result<SlowReport> {
    let p = Norm::new(spec.p)?;
    let g0 = traj.initial();
    let extent = g0.norm(Norm::Inf);
    let mut map_in_region = true;
    for k in 0..=2000 {
        let x = extent * (k as f64 / 1000.0 - 1.0);
        for y in traj.map().eval(x)? {
            if !(y.abs() <= x.abs() * (1.0 + 1e-12) && y.abs() >= x.abs() - spec.c * (1.0 + 1e-12)) {
                map_in_region = false;
            }
        }
    }
    let last = traj.steps().min(horizon);
    let mut rows = Vec::with_capacity(last);
    let mut first_violation = None;
    for n in 1..=last {
        let norm = traj.energy_step(n, p)?;
        let bound = spec.phi.eval(2.0 * (n as f64 - 1.0));
        if norm < bound && first_violation.is_none() {
            first_violation = Some(n);
        }
        rows.push(SlowRow { n, norm, bound });
    }
    let window_holds = match traj.retention() {
        Retention::Ends => None,
        Retention::All => {
            let mut ok = true;
            for k in 0..=4 * last {
                let t = 0.5 * k as f64;
                ok &= traj.energy_at_time(t, p)?.value >= spec.phi.eval(t);
            }
            Some(ok)
        }
    };
    Ok(SlowReport {
        holds: first_violation.is_none() && window_holds != Some(false),
        rows,
        horizon,
        first_violation,
        window_holds,
        map_in_region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::damping_maps::{RotatedMap, SelectionPolicy};
    use crate::riemann_core::{evolve_with, EvolveOptions};

    #[test]
    fn harmonic_sequences() {
        let (a, b) = build_sequences(|t| 1.0 / (t + 1.0), 5);
        let want_b = [1.0, 0.5, 1.0 / 3.0, 0.25, 0.2];
        let want_a = [1.0, 0.5, 1.0 / 6.0, 1.0 / 12.0, 1.0 / 20.0];
        for k in 0..5 {
            assert!((b[k] - want_b[k]).abs() < 1e-15);
            assert!((a[k] - want_a[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn recursion_is_exact_and_telescopes() {
        let r = |t: f64| 1.0 / (t + 2.0).sqrt();
        let (a, b) = build_sequences(r, 100_000);
        for n in 2..b.len() {
            assert_eq!(b[n] - (2.0 * b[n - 1] - b[n - 2]).max(r(n as f64)), 0.0);
        }
        assert!(b.windows(2).all(|w| w[1] < w[0]));
        assert!(a[1..].windows(2).all(|w| w[1] <= w[0]));
        let partial: f64 = a[1..].iter().sum();
        assert!((partial + b[b.len() - 1] - b[0]).abs() < 1e-10);
    }

    #[test]
    fn p1_profile_levels() {
        let spec = SlowSpec { phi: phi_from_tag("inv-poly:1:2").unwrap(), p: 1.0, c: 1.0, k_max: Some(3000) };
        let built = build_initial(&spec).unwrap();
        let (a, _) = build_sequences(spec.sequence_rate(), 3001);
        let g = &built.profile;
        for k in [1usize, 2, 7, 100] {
            let mid = 0.5 * (a[k] + a[k + 1]);
            if a[k] > a[k + 1] {
                assert_eq!(g.value_at(mid), k as f64);
            }
        }
        assert!((built.mass - g.power_sum(Norm::P(1.0))).abs() < 1e-9 * built.mass);
    }

    #[test]
    fn truncation_too_coarse() {
        let spec = SlowSpec { phi: phi_from_tag("inv-log").unwrap(), p: 1.0, c: 1.0, k_max: Some(5) };
        assert!(matches!(build_initial(&spec), Err(Error::TruncationTooCoarse { .. })));
    }

    #[test]
    fn bound_holds_on_small_case() {
        let spec = SlowSpec { phi: phi_from_tag("inv-poly:1:2").unwrap(), p: 2.0, c: 2.0, k_max: Some(3600) };
        let built = build_initial(&spec).unwrap();
        assert_eq!(built.horizon, 20);
        let map = RotatedMap::saturation_band(2.0).unwrap();
        for policy in [SelectionPolicy::MinAbs, SelectionPolicy::MaxAbs, SelectionPolicy::Seeded { seed: 9 }] {
            let opts = EvolveOptions { norms: vec![Norm::P(2.0)], retention: Retention::All };
            let traj = evolve_with(&built.profile, &map, 20, policy, &opts).unwrap();
            let r = verify_lower_bound(&traj, &spec, built.horizon).unwrap();
            assert!(r.holds && r.map_in_region, "{policy:?}: {:?}", r.first_violation);
            assert!(r.rows[0].norm >= spec.phi.eval(0.0));
        }
    }
}
