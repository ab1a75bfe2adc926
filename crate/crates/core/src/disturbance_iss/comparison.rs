//! Gain of the map, its class-K-infinity minorant, the scalar comparison
//! system and the two stability verdicts built on them.

use serde::Serialize;

use super::{check_dp, evolve_disturbed, reduce_disturbance, DecayTag, Disturbance, Membership};
use crate::damping_maps::{RotatedMap, SelectionPolicy};
use crate::decay_analysis::{kl_envelope, KlEnvelope, KlSamples};
use crate::error::{Error, Result};
use crate::riemann_core::{evolve_with, EvolveOptions, Norm, SimpleProfile, Trajectory};

/// `(r_k, mu(r_k))` with `r_k = k h` for `0 <= r_k <= r_max`, where `mu(r)` is
/// the largest `|y|` over the branches at `|x| <= r`, taken on the grid.
pub fn map_gain_samples(map: &RotatedMap, r_max: f64, h: f64) -> Result<Vec<(f64, f64)>> {
    if !(h > 0.0 && r_max >= 0.0 && r_max.is_finite()) {
        return Err(Error::InvalidProfile(format!("bad gain grid r_max = {r_max}, h = {h}")));
    }
    let k_max = (r_max / h).ceil() as usize;
    let mut out = Vec::with_capacity(k_max + 1);
    let mut running = 0.0f64;
    for k in 0..=k_max {
        let r = k as f64 * h;
        for x in [r, -r] {
            running = running.max(map.eval(x)?.iter().fold(0.0f64, |m, y| m.max(y.abs())));
        }
        out.push((r, running));
    }
    Ok(out)
}

/// Piecewise-affine `phi` with `phi(0) = 0`, slopes in `[0, 1]` and
/// `phi(r_k) <= r_k - mu(r_k)` at every sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KInfMinorant {
    nodes: Vec<f64>,
    values: Vec<f64>,
    /// Slope used past the last node.
    tail_slope: f64,
    /// Supremum of `phi` when it is bounded (the range-limited variant).
    range_limit: Option<f64>,
}

/// Builds `phi` from gain samples starting at `r = 0`.
///
/// `limit = Some(l)` asks for the range-limited variant: `phi` is kept below
/// `l` and stays flat past the samples, so its inverse and the gain exist only
/// below `l`. Without it the last slope is continued, and a flat last slope
/// also yields a range-limited minorant.
pub fn kinfty_minorant(samples: &[(f64, f64)], limit: Option<f64>) -> Result<KInfMinorant> {
    if samples.len() < 2 || samples[0].0 != 0.0 {
        return Err(Error::InvalidProfile("gain samples must start at r = 0 and hold two points".into()));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0) || w[1].1 < w[0].1) {
        return Err(Error::MonotonicityViolation(
            "gain samples must be increasing in r and nondecreasing in mu".into(),
        ));
    }
    if let Some(&(r, mu)) = samples[1..].iter().find(|(r, mu)| !(mu < r)) {
        return Err(Error::NotStrictDamping { r, mu });
    }
    let m = samples.len();
    let mut floor = vec![0.0; m];
    let mut run = f64::INFINITY;
    for i in (1..m).rev() {
        run = run.min(samples[i].0 - samples[i].1);
        floor[i] = run;
    }
    let nodes: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let mut values = vec![0.0; m];
    for i in 1..m {
        let mut v = (values[i - 1] + (nodes[i] - nodes[i - 1])).min(floor[i]);
        if let Some(l) = limit {
            v = v.min(l);
        }
        values[i] = v;
    }
    let last_slope = (values[m - 1] - values[m - 2]) / (nodes[m - 1] - nodes[m - 2]);
    let (tail_slope, range_limit) = match limit {
        Some(l) => (0.0, Some(l.min(values[m - 1]))),
        None if last_slope > 0.0 => (last_slope, None),
        None => (0.0, Some(values[m - 1])),
    };
    Ok(KInfMinorant { nodes, values, tail_slope, range_limit })
}

impl KInfMinorant {
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let m = self.nodes.len();
        if r >= self.nodes[m - 1] {
            return self.values[m - 1] + self.tail_slope * (r - self.nodes[m - 1]);
        }
        let i = self.nodes.partition_point(|&x| x <= r) - 1;
        if r == self.nodes[i] {
            return self.values[i];
        }
        let w = (r - self.nodes[i]) / (self.nodes[i + 1] - self.nodes[i]);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    /// `sup { r : phi(r) <= y }`, the largest preimage; `None` when `y` is at
    /// or above the range of a bounded `phi`.
    pub fn inverse(&self, y: f64) -> Option<f64> {
        if y < 0.0 {
            return None;
        }
        let m = self.nodes.len();
        let top = self.values[m - 1];
        if y >= top {
            if self.tail_slope > 0.0 {
                return Some(self.nodes[m - 1] + (y - top) / self.tail_slope);
            }
            return None;
        }
        // First node with a value above y; phi <= y up to the crossing in the previous cell.
        let j = self.values.partition_point(|&v| v <= y);
        let (x0, x1, v0, v1) = (self.nodes[j - 1], self.nodes[j], self.values[j - 1], self.values[j]);
        Some(x0 + (y - v0) / (v1 - v0) * (x1 - x0))
    }

    /// Supremum of `phi` when bounded.
    pub fn range_limit(&self) -> Option<f64> {
        self.range_limit
    }

    /// `gamma_0(r) = c phi^{-1}(r / c)` with `c = 2^{1/p}`.
    pub fn gain(&self, r: f64, p: Norm) -> Option<f64> {
        let c = norm_width(p);
        self.inverse(r / c).map(|x| c * x)
    }

    /// Convex variant under a sector bound `mu(r) <= a r` for large `r`.
    ///
    /// `M` is the smallest positive sample radius from which every later sample
    /// satisfies the bound. The minorant is scaled by
    /// `lambda = min(1, (1 - a) M / phi(M))` on `[0, M]` and continued with
    /// slope `1 - a`; each slope is then replaced by the minimum of the slopes
    /// to its right, which makes `phi` convex and keeps it below.
    pub fn with_sector_tail(&self, a: f64, samples: &[(f64, f64)]) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidProfile(format!("sector constant a = {a} must lie in (0, 1)")));
        }
        let bad = samples.iter().rposition(|&(r, mu)| mu > a * r);
        let idx = match bad {
            Some(i) if i + 1 >= samples.len() => {
                let (r, mu) = samples[i];
                return Err(Error::ConditionNotCertified(format!("mu({r}) = {mu} exceeds {a} r at the last sample")));
            }
            Some(i) => i + 1,
            None => 1,
        };
        let big_m = samples[idx].0;
        let phi_m = self.eval(big_m);
        let lambda = if phi_m > 0.0 { (1.0 - a) * big_m / phi_m } else { 1.0 }.min(1.0);
        let mut nodes: Vec<f64> = self.nodes.iter().copied().take_while(|&x| x < big_m).collect();
        nodes.push(big_m);
        let mut values: Vec<f64> = nodes.iter().map(|&x| lambda * self.eval(x)).collect();
        let tail_slope = 1.0 - a;
        let mut slope = tail_slope;
        let mut slopes = vec![0.0; nodes.len() - 1];
        for i in (0..nodes.len() - 1).rev() {
            let s = (values[i + 1] - values[i]) / (nodes[i + 1] - nodes[i]);
            slope = slope.min(s);
            slopes[i] = slope;
        }
        for i in 1..nodes.len() {
            values[i] = values[i - 1] + slopes[i - 1] * (nodes[i] - nodes[i - 1]);
        }
        Ok(Self { nodes, values, tail_slope, range_limit: None })
    }
}

fn norm_width(p: Norm) -> f64 {
    match p {
        Norm::Inf => 1.0,
        Norm::P(e) => 2f64.powf(1.0 / e),
    }
}

/// `k_{n+1} = c (id - phi)(|k_n| / c) + |u_n|`, `c = 2^{1/p}`; returns `k_0..k_N`
/// for `N = u.len()`.
pub fn comparison_system(k0: f64, u: &[f64], phi: &KInfMinorant, p: Norm) -> Vec<f64> {
    let c = norm_width(p);
    let mut out = Vec::with_capacity(u.len() + 1);
    let mut k = k0;
    out.push(k);
    for &un in u {
        let x = k.abs() / c;
        k = c * (x - phi.eval(x)) + un.abs();
        out.push(k);
    }
    out
}

/// One failed check, located by scenario index and time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IssViolation {
    pub scenario: usize,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioSummary {
    pub scenario: usize,
    pub initial: f64,
    /// `2 sup_n |delta_n|_p` over the horizon.
    pub input: f64,
    pub gain: Option<f64>,
    /// Largest `|g_n|_p` over the last quarter of the horizon.
    pub tail_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IssReport {
    #[serde(skip)]
    pub beta: KlEnvelope,
    pub p: Norm,
    pub horizon: usize,
    /// `gamma_0(2 sup |delta_n|_p)` for the largest input over all scenarios.
    pub gain_formula_value: Option<f64>,
    /// Failures of `e_p(2n) <= beta(e_p(0), n) + gamma_0(input)`.
    pub violations: Vec<IssViolation>,
    /// Failures of `|g_n|_p <= k_n` against the comparison system.
    pub dominance_violations: Vec<IssViolation>,
    /// Scenarios whose tail exceeds `gamma_0(input)`.
    pub limsup_violations: Vec<IssViolation>,
    pub scenarios: Vec<ScenarioSummary>,
}

impl IssReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty() && self.dominance_violations.is_empty() && self.limsup_violations.is_empty()
    }
}

/// Relative slack for comparisons between quantities computed along different
/// floating point paths.
const REL_SLACK: f64 = 1e-12;

/// Runs every `(g0, d)` scenario for `n` steps and checks the input-to-state
/// estimate with `beta` measured on the undisturbed system and `gamma_0` from
/// `phi`. The undisturbed runs start from each `g0` rescaled to norms `2^k`.
pub fn iss_check(
    map: &RotatedMap,
    scenarios: &[(SimpleProfile, Disturbance)],
    n: usize,
    p: Norm,
    policy: SelectionPolicy,
    phi: &KInfMinorant,
) -> Result<IssReport> {
    let opts = EvolveOptions { norms: vec![p], ..EvolveOptions::default() };
    let opts = EvolveOptions { retention: crate::riemann_core::Retention::Ends, ..opts };
    let norms: Vec<f64> = scenarios.iter().map(|(g, _)| g.norm(p)).collect();
    let positive = norms.iter().copied().filter(|v| *v > 0.0);
    let lo = positive.clone().fold(f64::INFINITY, f64::min);
    let hi = positive.fold(0.0f64, f64::max);
    let (k_min, k_max) = if hi > 0.0 { (lo.log2().floor() as i32 - 1, hi.log2().ceil() as i32 + 1) } else { (-1, 1) };

    let mut table = vec![vec![0.0f64; n + 1]; (k_max - k_min + 1) as usize];
    for (j, row) in table.iter_mut().enumerate() {
        let level = 2f64.powi(k_min + j as i32);
        for ((g, _), &norm) in scenarios.iter().zip(&norms) {
            if norm == 0.0 {
                continue;
            }
            let scaled = g.map_values(|v| v * (level / norm));
            let t = evolve_with(&scaled, map, n, policy, &opts)?;
            for (slot, e) in row.iter_mut().zip(t.energies(p).expect("requested norm")) {
                *slot = slot.max(*e);
            }
        }
        for i in (0..n).rev() {
            row[i] = row[i].max(row[i + 1]);
        }
    }
    for j in 1..table.len() {
        for i in 0..=n {
            table[j][i] = table[j][i].max(table[j - 1][i]);
        }
    }
    let beta = kl_envelope(KlSamples { k_min, values: table })?;

    let mut report = IssReport {
        beta,
        p,
        horizon: n,
        gain_formula_value: None,
        violations: Vec::new(),
        dominance_violations: Vec::new(),
        limsup_violations: Vec::new(),
        scenarios: Vec::new(),
    };
    let mut largest_input = 0.0f64;
    for (id, (g0, d)) in scenarios.iter().enumerate() {
        let shifts = reduce_disturbance(d, n.saturating_sub(1));
        let u: Vec<f64> = shifts.iter().take(n).map(|w| 2.0 * w.norm(p)).collect();
        let input = u.iter().copied().fold(0.0f64, f64::max);
        largest_input = largest_input.max(input);
        let gain = phi.gain(input, p);
        let Some(gamma) = gain else {
            return Err(Error::ConditionNotCertified(format!(
                "scenario {id}: input {input} is outside the range of the gain"
            )));
        };
        let traj = evolve_disturbed(g0, map, d, n, policy, &opts)?;
        let e = traj.energies(p).expect("requested norm");
        let k = comparison_system(e[0], &u, phi, p);
        for (i, (&lhs, &kn)) in e.iter().zip(&k).enumerate() {
            let t = 2.0 * i as f64;
            if lhs > kn * (1.0 + REL_SLACK) {
                report.dominance_violations.push(IssViolation { scenario: id, t, lhs, rhs: kn });
            }
            let rhs = report.beta.eval(e[0], i as f64) + gamma;
            if lhs > rhs * (1.0 + REL_SLACK) {
                report.violations.push(IssViolation { scenario: id, t, lhs, rhs });
            }
        }
        let start = n - n / 4;
        let tail_max = e[start..].iter().copied().fold(0.0f64, f64::max);
        if tail_max > gamma + 1e-9 {
            report.limsup_violations.push(IssViolation { scenario: id, t: 2.0 * n as f64, lhs: tail_max, rhs: gamma });
        }
        report.scenarios.push(ScenarioSummary { scenario: id, initial: e[0], input, gain, tail_max });
    }
    report.gain_formula_value = phi.gain(largest_input, p);
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct RejectionReport {
    /// Which sufficient condition was certified.
    pub condition: String,
    pub p: Norm,
    /// `e_p(2n)` for `n = 0..=N`.
    pub decay_curve: Vec<f64>,
    /// `(eps, n)`: first step from which `e_p` stays below `eps`, for `eps = 10^-k`.
    pub reach: Vec<(f64, Option<usize>)>,
    pub final_energy: f64,
    pub reduces_to_strong_stability: bool,
}

/// Certifies that `e_p -> 0` for the disturbed trajectory and records how fast.
///
/// The gain of the map must stay strictly below the identity on the sampled
/// range. On top of that either `p` is finite and the windowed sum of `|d|`
/// lies in `L^p`, or `d` is known to vanish at infinity.
pub fn verify_perturbation_rejection(traj: &Trajectory, d: &Disturbance, p: Norm) -> Result<RejectionReport> {
    let curve: Vec<f64> = match traj.energies(p) {
        Some(e) => e.to_vec(),
        None => (0..=traj.steps()).map(|n| traj.energy_step(n, p)).collect::<Result<_>>()?,
    };
    let g0 = traj.initial();
    let amp = match d.decay() {
        DecayTag::Geometric { amplitude, .. }
        | DecayTag::Polynomial { amplitude, .. }
        | DecayTag::Constant { amplitude } => amplitude,
        _ => reduce_disturbance(d, traj.steps()).iter().map(|w| w.norm(Norm::Inf)).fold(0.0, f64::max),
    };
    let r_max = (g0.norm(Norm::Inf) + 2.0 * amp).max(1.0) * 2.0;
    let samples = map_gain_samples(traj.map(), r_max, r_max / 2000.0)?;
    kinfty_minorant(&samples, None).map_err(|e| match e {
        Error::NotStrictDamping { r, mu } => {
            Error::ConditionNotCertified(format!("the map gain reaches the identity: mu({r}) = {mu}"))
        }
        other => other,
    })?;

    let summable = matches!(p, Norm::P(_)) && check_dp(d, p, traj.steps().max(1)).membership == Membership::Member;
    let vanishing = match d.decay() {
        DecayTag::Compact { .. } | DecayTag::Geometric { .. } => true,
        DecayTag::Polynomial { power, .. } => power > 0.0,
        DecayTag::Constant { amplitude } => amplitude == 0.0,
        DecayTag::Unknown => false,
    };
    let condition = match (summable, vanishing) {
        (true, _) => "finite p with summable disturbance windows",
        (false, true) => "disturbance vanishing at infinity",
        (false, false) => {
            return Err(Error::ConditionNotCertified(format!(
                "disturbance '{}' is neither summable in L^p nor known to vanish",
                d.tag()
            )))
        }
    };
    let reach = (1..=12)
        .map(|k| {
            let eps = 10f64.powi(-k);
            let from = curve.iter().rposition(|&v| v >= eps).map_or(0, |i| i + 1);
            (eps, (from < curve.len()).then_some(from))
        })
        .collect();
    Ok(RejectionReport {
        condition: condition.into(),
        p,
        final_energy: *curve.last().expect("nonempty"),
        decay_curve: curve,
        reach,
        reduces_to_strong_stability: d.is_zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_samples() -> Vec<(f64, f64)> {
        map_gain_samples(&RotatedMap::scale(0.5), 8.0, 0.01).unwrap()
    }

    #[test]
    fn half_map_gives_half() {
        let phi = kinfty_minorant(&half_samples(), None).unwrap();
        for r in [0.0, 0.01, 0.37, 2.5, 8.0, 20.0] {
            assert!((phi.eval(r) - r / 2.0).abs() <= 1e-14 * r.max(1.0), "{r}");
            assert!((phi.inverse(r / 2.0).unwrap() - r).abs() <= 1e-12 * r.max(1.0));
        }
    }

    #[test]
    fn minorant_properties_on_nodes() {
        // A gain with a flat stretch: mu = r/2 up to 1, then frozen at 1/2 until r = 2.
        let samples: Vec<(f64, f64)> = (0..=400)
            .map(|k| {
                let r = k as f64 * 0.01;
                let mu = if r <= 1.0 {
                    r / 2.0
                } else if r <= 2.0 {
                    0.5
                } else {
                    r - 1.5
                };
                (r, mu)
            })
            .collect();
        let phi = kinfty_minorant(&samples, None).unwrap();
        let mut prev = (0.0, 0.0);
        for &(r, mu) in &samples[1..] {
            let v = phi.eval(r);
            assert!(v > 0.0 && v <= r - mu, "{r}");
            assert!(v - prev.1 <= r - prev.0 + 1e-15);
            assert!(v >= prev.1);
            prev = (r, v);
        }
    }

    #[test]
    fn sign_map_is_not_strict() {
        let samples = map_gain_samples(&RotatedMap::sign(1.0).unwrap(), 3.0, 0.01).unwrap();
        assert!(matches!(kinfty_minorant(&samples, None), Err(Error::NotStrictDamping { .. })));
    }

    #[test]
    fn comparison_without_input_halves() {
        let phi = kinfty_minorant(&half_samples(), None).unwrap();
        let k = comparison_system(3.0, &[0.0; 5], &phi, Norm::Inf);
        assert_eq!(k, vec![3.0, 1.5, 0.75, 0.375, 0.1875, 0.09375]);
    }

    #[test]
    fn comparison_limsup_below_gain() {
        let phi = kinfty_minorant(&half_samples(), None).unwrap();
        let p = Norm::P(2.0);
        let k = comparison_system(5.0, &[0.3; 80], &phi, p);
        let gain = phi.gain(0.3, p).unwrap();
        assert!((gain - 0.6).abs() < 1e-12);
        assert!(*k.last().unwrap() <= gain + 1e-12);
    }

    #[test]
    fn range_limited_gain() {
        let samples: Vec<(f64, f64)> = (0..=300).map(|k| (k as f64 * 0.01, (k as f64 * 0.01 - 1.0).max(0.0))).collect();
        let phi = kinfty_minorant(&samples, Some(1.0)).unwrap();
        assert_eq!(phi.range_limit(), Some(1.0));
        assert!(phi.gain(0.5, Norm::Inf).is_some());
        assert!(phi.gain(1.0, Norm::Inf).is_none());
    }

    #[test]
    fn sector_tail_is_convex_and_below() {
        let samples: Vec<(f64, f64)> = (0..=500)
            .map(|k| {
                (k as f64 * 0.01, {
                    let r = k as f64 * 0.01;
                    r * r / (1.0 + r) / 1.5
                })
            })
            .collect();
        let phi = kinfty_minorant(&samples, None).unwrap();
        let conv = phi.with_sector_tail(0.7, &samples).unwrap();
        let xs: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        for w in xs.windows(3) {
            let (a, b, c) = (conv.eval(w[0]), conv.eval(w[1]), conv.eval(w[2]));
            assert!(b <= 0.5 * (a + c) + 1e-12);
        }
        for &(r, mu) in &samples {
            assert!(conv.eval(r) <= r - mu + 1e-12);
        }
    }

    #[test]
    fn iss_on_half_map() {
        let map = RotatedMap::scale(0.5);
        let phi = kinfty_minorant(&half_samples(), None).unwrap();
        let scenarios = vec![
            (
                SimpleProfile::sample(-1.0, 1.0, 8, |s| 1.0 + s).unwrap(),
                Disturbance::from_tag("const:0.1:0.2", 4).unwrap(),
            ),
            (SimpleProfile::constant(-0.5), Disturbance::from_tag("bump:1:0:0:5", 4).unwrap()),
            (SimpleProfile::constant(0.0), Disturbance::zero()),
        ];
        let r = iss_check(&map, &scenarios, 40, Norm::P(2.0), SelectionPolicy::MinAbs, &phi).unwrap();
        assert!(r.holds(), "{:?} {:?} {:?}", r.violations, r.dominance_violations, r.limsup_violations);
    }

    #[test]
    fn rejection_compact() {
        let d = Disturbance::from_tag("bump:0.5:0.5:0:3", 4).unwrap();
        let g0 = SimpleProfile::constant(1.0);
        let t =
            evolve_disturbed(&g0, &RotatedMap::scale(0.5), &d, 40, SelectionPolicy::MinAbs, &EvolveOptions::default())
                .unwrap();
        let r = verify_perturbation_rejection(&t, &d, Norm::P(2.0)).unwrap();
        assert!(r.final_energy < 1e-6);
        assert!(r.reach[5].1.is_some());
        assert!(!r.reduces_to_strong_stability);
        let z = evolve_disturbed(
            &g0,
            &RotatedMap::scale(0.5),
            &Disturbance::zero(),
            5,
            SelectionPolicy::MinAbs,
            &EvolveOptions::default(),
        )
        .unwrap();
        assert!(
            verify_perturbation_rejection(&z, &Disturbance::zero(), Norm::Inf).unwrap().reduces_to_strong_stability
        );
    }

    #[test]
    fn rejection_refused_for_sign_map() {
        let d = Disturbance::zero();
        let t = evolve_disturbed(
            &SimpleProfile::constant(0.5),
            &RotatedMap::sign(1.0).unwrap(),
            &d,
            3,
            SelectionPolicy::MinAbs,
            &EvolveOptions::default(),
        )
        .unwrap();
        assert!(matches!(verify_perturbation_rejection(&t, &d, Norm::P(2.0)), Err(Error::ConditionNotCertified(_))));
    }
}
