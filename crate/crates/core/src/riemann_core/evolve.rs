//! Cellwise evolution `g_{n+1}(s) in S(g_n(s))` and quantities read off the
//! concatenated invariant `g(s) = g_n(s - 2n)`.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use super::{power_sum, Norm, SimpleProfile};
use crate::damping_maps::{RotatedMap, SelectionPolicy};
use crate::error::{Error, Result};
use crate::numeric::FRAC_1_SQRT_2;

/// Cells per parallel task; smaller lattices are stepped serially.
const PAR_CHUNK: usize = 8192;

/// Which profiles a trajectory keeps in memory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Retention {
    /// Every `g_n`; needed for window energies and reconstruction.
    #[default]
    All,
    /// Only `g_0` and `g_N`; per-step energies are still recorded.
    Ends,
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub norms: Vec<Norm>,
    pub retention: Retention,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { norms: vec![Norm::P(1.0), Norm::P(2.0), Norm::Inf], retention: Retention::All }
    }
}

/// `e_p(t)` at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub p: Norm,
    pub value: f64,
}

/// Profiles `g_0..g_N` on one lattice, with per-step norms.
#[derive(Clone, Debug)]
pub struct Trajectory {
    lattice: Vec<f64>,
    profiles: Vec<Vec<f64>>,
    retention: Retention,
    steps: usize,
    map: RotatedMap,
    policy: SelectionPolicy,
    norms: Vec<Norm>,
    energies: Vec<Vec<f64>>,
    /// `dominated[n]`: `|g_{n+1}| <= |g_n|` on every cell.
    dominated: Vec<bool>,
    primitive: OnceLock<Vec<f64>>,
}

pub(crate) fn step_values(vals: &[f64], f: impl Fn(usize, f64) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    if vals.len() < 2 * PAR_CHUNK {
        vals.iter().enumerate().map(|(i, &v)| f(i, v)).collect()
    } else {
        let mut out = vec![0.0; vals.len()];
        out.par_chunks_mut(PAR_CHUNK).enumerate().try_for_each(|(c, chunk)| -> Result<()> {
            let base = c * PAR_CHUNK;
            for (k, slot) in chunk.iter_mut().enumerate() {
                *slot = f(base + k, vals[base + k])?;
            }
            Ok(())
        })?;
        Ok(out)
    }
}

/// Evolves with the default options (norms 1, 2, inf; every profile kept).
pub fn evolve(g0: &SimpleProfile, s: &RotatedMap, n: usize, policy: SelectionPolicy) -> Result<Trajectory> {
    evolve_with(g0, s, n, policy, &EvolveOptions::default())
}

pub fn evolve_with(
    g0: &SimpleProfile,
    s: &RotatedMap,
    n: usize,
    policy: SelectionPolicy,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let mut builder = TrajectoryBuilder::new(g0, s.clone(), policy, opts);
    let mut cur = g0.values().to_vec();
    for _ in 0..n {
        let next = step_values(&cur, |_, v| s.eval_selected(v, &policy))?;
        builder.push(&cur, next.clone());
        cur = next;
    }
    Ok(builder.finish())
}

pub(crate) struct TrajectoryBuilder {
    t: Trajectory,
}

impl TrajectoryBuilder {
    pub(crate) fn new(g0: &SimpleProfile, map: RotatedMap, policy: SelectionPolicy, opts: &EvolveOptions) -> Self {
        let lattice = g0.breakpoints().to_vec();
        let energies = opts.norms.iter().map(|&p| vec![g0.norm(p)]).collect();
        Self {
            t: Trajectory {
                lattice,
                profiles: vec![g0.values().to_vec()],
                retention: opts.retention,
                steps: 0,
                map,
                policy,
                norms: opts.norms.clone(),
                energies,
                dominated: Vec::new(),
                primitive: OnceLock::new(),
            },
        }
    }

    pub(crate) fn push(&mut self, prev: &[f64], next: Vec<f64>) {
        let t = &mut self.t;
        t.dominated.push(prev.iter().zip(&next).all(|(a, b)| b.abs() <= a.abs()));
        for (k, &p) in t.norms.iter().enumerate() {
            t.energies[k].push(p.root(power_sum(&t.lattice, &next, p)));
        }
        t.steps += 1;
        match t.retention {
            Retention::All => t.profiles.push(next),
            Retention::Ends => {
                if t.profiles.len() == 1 {
                    t.profiles.push(next);
                } else {
                    t.profiles[1] = next;
                }
            }
        }
    }

    pub(crate) fn finish(self) -> Trajectory {
        self.t
    }
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn lattice(&self) -> &[f64] {
        &self.lattice
    }

    pub fn map(&self) -> &RotatedMap {
        &self.map
    }

    pub fn policy(&self) -> SelectionPolicy {
        self.policy
    }

    pub fn norms(&self) -> &[Norm] {
        &self.norms
    }

    pub fn retention(&self) -> Retention {
        self.retention
    }

    /// `|g_{n+1}| <= |g_n|` cellwise for every recorded step.
    pub fn is_dominated(&self) -> bool {
        self.dominated.iter().all(|&d| d)
    }

    fn values(&self, n: usize) -> Option<&[f64]> {
        match self.retention {
            Retention::All => self.profiles.get(n).map(|v| v.as_slice()),
            Retention::Ends if n == 0 => Some(&self.profiles[0]),
            Retention::Ends if n == self.steps => self.profiles.last().map(|v| v.as_slice()),
            Retention::Ends => None,
        }
    }

    /// `g_n`, if retained.
    pub fn profile(&self, n: usize) -> Option<SimpleProfile> {
        self.values(n).map(|v| SimpleProfile::from_parts_unchecked(self.lattice.clone(), v.to_vec()))
    }

    pub fn initial(&self) -> SimpleProfile {
        self.profile(0).expect("g_0 is always kept")
    }

    pub fn last(&self) -> SimpleProfile {
        self.profile(self.steps).expect("g_N is always kept")
    }

    /// `|g_n|_p` for `n = 0..=N`, when `p` was requested.
    pub fn energies(&self, p: Norm) -> Option<&[f64]> {
        self.norms.iter().position(|&q| q == p).map(|k| self.energies[k].as_slice())
    }

    /// `|g_n|_p`, from the table when available.
    pub fn energy_step(&self, n: usize, p: Norm) -> Result<f64> {
        if let Some(e) = self.energies(p) {
            return e.get(n).copied().ok_or(Error::WindowOutOfRange { t: 2.0 * n as f64, max: self.t_max() });
        }
        let v = self.values(n).ok_or_else(not_retained)?;
        Ok(p.root(power_sum(&self.lattice, v, p)))
    }

    fn t_max(&self) -> f64 {
        2.0 * self.steps as f64
    }

    fn pair(&self, n: usize) -> Result<(&[f64], &[f64])> {
        match (self.values(n), self.values(n + 1)) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(not_retained()),
        }
    }

    /// `e_p(t)`: the `L^p` norm of `g` on the window `[t - 1, t + 1]`.
    ///
    /// For `t` in `[2n, 2n + 2)` the window holds `g_n` on `(c, 1]` and
    /// `g_{n+1}` on `(-1, c]`, `c = t - 2n - 1`. When the step is dominated the
    /// value is computed as `|g_n|^p` minus a running sum of nonnegative
    /// increments, capped below by `|g_{n+1}|^p`, which keeps the floating
    /// point result nonincreasing in `t`.
    pub fn energy_at_time(&self, t: f64, p: Norm) -> Result<EnergyRecord> {
        let t_max = self.t_max();
        if !(t >= 0.0 && t <= t_max) {
            return Err(Error::WindowOutOfRange { t, max: t_max });
        }
        if t == t_max {
            return Ok(EnergyRecord { t, p, value: self.energy_step(self.steps, p)? });
        }
        let n = ((t / 2.0).floor() as usize).min(self.steps - 1);
        let c = t - 2.0 * n as f64 - 1.0;
        let (gn, gm) = self.pair(n)?;
        let b = &self.lattice;
        let value = match p {
            Norm::Inf => {
                let mut m = 0.0f64;
                for i in 0..gn.len() {
                    if b[i + 1] > c {
                        m = m.max(gn[i].abs());
                    }
                    if b[i] < c {
                        m = m.max(gm[i].abs());
                    }
                }
                m
            }
            _ if self.dominated[n] => {
                let a_n = power_sum(b, gn, p);
                let a_m = power_sum(b, gm, p);
                let mut d = 0.0;
                for i in 0..gn.len() {
                    let inc = p.power(gn[i]) - p.power(gm[i]);
                    if b[i + 1] <= c {
                        d += inc * (b[i + 1] - b[i]);
                    } else {
                        if b[i] < c {
                            d += inc * (c - b[i]);
                        }
                        break;
                    }
                }
                p.root((a_n - d).max(a_m))
            }
            _ => {
                let mut s = 0.0;
                for i in 0..gn.len() {
                    let (lo, hi) = (b[i], b[i + 1]);
                    if hi > c {
                        s += p.power(gn[i]) * (hi - lo.max(c));
                    }
                    if lo < c {
                        s += p.power(gm[i]) * (hi.min(c) - lo);
                    }
                }
                p.root(s)
            }
        };
        Ok(EnergyRecord { t, p, value })
    }

    /// Pieces `(start, end, value)` of the concatenated `g` on `[t - 1, t + 1]`.
    fn window_pieces(&self, t: f64) -> Result<Vec<(f64, f64, f64)>> {
        let t_max = self.t_max();
        if !(t >= 0.0 && t <= t_max) {
            return Err(Error::WindowOutOfRange { t, max: t_max });
        }
        let n = ((t / 2.0).floor() as usize).min(self.steps.saturating_sub(1));
        let mut out = Vec::new();
        for k in [n, n + 1] {
            let Some(v) = self.values(k) else {
                if k <= self.steps {
                    return Err(not_retained());
                }
                continue;
            };
            let off = 2.0 * k as f64;
            for i in 0..v.len() {
                let lo = (self.lattice[i] + off).max(t - 1.0);
                let hi = (self.lattice[i + 1] + off).min(t + 1.0);
                if hi > lo {
                    out.push((lo, hi, v[i]));
                }
            }
        }
        Ok(out)
    }

    /// `V(t) = e^{-nu t} \int_{t-1}^{t+1} e^{nu s} |g(s)|^p ds`, in closed form per cell.
    pub fn vp_lyapunov(&self, t: f64, nu: f64, p: Norm) -> Result<f64> {
        let pieces = self.window_pieces(t)?;
        Ok(pieces
            .iter()
            .map(|&(a, b, v)| {
                let w = if nu == 0.0 { b - a } else { (nu * (a - t)).exp() * (nu * (b - a)).exp_m1() / nu };
                p.power(v) * w
            })
            .sum())
    }

    /// Value of the concatenated invariant at `s` in `(-1, 2N + 1]`.
    pub fn g_at(&self, s: f64) -> Result<f64> {
        let max = 2.0 * self.steps as f64 + 1.0;
        if !(s >= -1.0 && s <= max) {
            return Err(Error::WindowOutOfRange { t: s, max });
        }
        let n = (((s - 1.0) / 2.0).ceil().max(0.0) as usize).min(self.steps);
        let v = self.values(n).ok_or_else(not_retained)?;
        let local = s - 2.0 * n as f64;
        let i = self.lattice.partition_point(|&b| b < local);
        Ok(v[i.saturating_sub(1).min(v.len() - 1)])
    }

    /// `\int_{-1}^{s} g`.
    fn primitive_from_start(&self, s: f64) -> Result<f64> {
        let totals = match self.primitive.get() {
            Some(t) => t,
            None => {
                let mut acc = vec![0.0];
                for n in 0..=self.steps {
                    let v = self.values(n).ok_or_else(not_retained)?;
                    let last = *acc.last().unwrap();
                    acc.push(last + signed_integral(&self.lattice, v, 1.0));
                }
                let _ = self.primitive.set(acc);
                self.primitive.get().unwrap()
            }
        };
        let n = (((s - 1.0) / 2.0).ceil().max(0.0) as usize).min(self.steps);
        let v = self.values(n).ok_or_else(not_retained)?;
        Ok(totals[n] + signed_integral(&self.lattice, v, s - 2.0 * n as f64))
    }

    /// `(z(t, x), z_t(t, x), z_x(t, x))` for `x` in `[0, 1]`, `t` in `[0, 2N]`.
    pub fn reconstruct(&self, t: f64, x: f64) -> Result<(f64, f64, f64)> {
        if !(t >= 0.0 && t <= self.t_max() && (0.0..=1.0).contains(&x)) {
            return Err(Error::WindowOutOfRange { t, max: self.t_max() });
        }
        let (a, b) = (t - x, t + x);
        let z = (self.primitive_from_start(a)? - self.primitive_from_start(b)?) * FRAC_1_SQRT_2;
        let (ga, gb) = (self.g_at(a)?, self.g_at(b)?);
        Ok((z, (ga - gb) * FRAC_1_SQRT_2, -(ga + gb) * FRAC_1_SQRT_2))
    }
}

/// `\int_{lo}^{upto} g` for a profile on `bps`.
fn signed_integral(bps: &[f64], vals: &[f64], upto: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..vals.len() {
        if bps[i] >= upto {
            break;
        }
        s += vals[i] * (bps[i + 1].min(upto) - bps[i]);
    }
    s
}

fn not_retained() -> Error {
    Error::InvalidProfile("trajectory was evolved without keeping intermediate profiles".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::damping_maps::{rotate_relation, BoundaryRelation, Resolution};
    use crate::numeric::SQRT_2;
    use crate::scalar::ScalarFn;

    fn two_cell(a: f64, b: f64) -> SimpleProfile {
        SimpleProfile::new(vec![-1.0, 0.0, 1.0], vec![a, b]).unwrap()
    }

    #[test]
    fn evolve_examples() {
        let sign = RotatedMap::sign(SQRT_2).unwrap();
        let tr = evolve(&SimpleProfile::constant(0.7), &sign, 5, SelectionPolicy::MinAbs).unwrap();
        for n in 0..=5 {
            assert_eq!(tr.profile(n).unwrap().values(), &[0.7]);
        }
        let zero_map = rotate_relation(
            &BoundaryRelation::function_graph(ScalarFn::from_tag("identity").unwrap(), 10.0),
            Resolution::default(),
        )
        .unwrap();
        let tr = evolve(&two_cell(3.0, -8.0), &zero_map, 3, SelectionPolicy::MinAbs).unwrap();
        for n in 1..=3 {
            assert!(tr.profile(n).unwrap().values().iter().all(|&v| v == 0.0));
        }
        let tr = evolve(&two_cell(1.0, -2.0), &RotatedMap::scale(0.5), 3, SelectionPolicy::MinAbs).unwrap();
        assert_eq!(tr.profile(3).unwrap().values(), &[0.125, -0.25]);
    }

    #[test]
    fn energy_at_even_times_matches_table() {
        let g = SimpleProfile::new(vec![-1.0, -0.3, 0.4, 1.0], vec![2.0, -1.0, 0.5]).unwrap();
        let tr = evolve(&g, &RotatedMap::scale(0.5), 4, SelectionPolicy::MinAbs).unwrap();
        for p in [Norm::P(1.0), Norm::P(2.0), Norm::P(3.0), Norm::Inf] {
            for n in 0..=4 {
                let e = tr.energy_at_time(2.0 * n as f64, p).unwrap().value;
                assert_eq!(e, tr.profile(n).unwrap().norm(p));
            }
        }
        assert!(tr.energy_at_time(8.5, Norm::P(2.0)).is_err());
    }

    #[test]
    fn energy_window_general_formula() {
        // Non-dominated step: the window integral is computed directly.
        let g = two_cell(1.0, 2.0);
        let tr = evolve(&g, &RotatedMap::scale(2.0), 2, SelectionPolicy::MinAbs).unwrap();
        let e = tr.energy_at_time(1.0, Norm::P(1.0)).unwrap().value;
        // c = 0: g_0 on (0, 1] (value 2) and g_1 on (-1, 0] (value 2).
        assert_eq!(e, 4.0);
    }

    #[test]
    fn reconstruct_boundary_and_zero() {
        let g = SimpleProfile::new(vec![-1.0, -0.5, 0.25, 1.0], vec![1.0, -0.5, 2.0]).unwrap();
        let tr = evolve(&g, &RotatedMap::scale(0.5), 3, SelectionPolicy::MinAbs).unwrap();
        for k in 0..=60 {
            let t = k as f64 * 0.1;
            assert_eq!(tr.reconstruct(t, 0.0).unwrap().0, 0.0);
        }
        let zero = evolve(&SimpleProfile::constant(0.0), &RotatedMap::scale(0.5), 2, SelectionPolicy::MinAbs).unwrap();
        assert_eq!(zero.reconstruct(1.3, 0.7).unwrap(), (0.0, 0.0, -0.0));
    }

    #[test]
    fn vp_at_zero_rate_is_energy_power() {
        let g = SimpleProfile::new(vec![-1.0, 0.1, 1.0], vec![1.5, -0.5]).unwrap();
        let tr = evolve(&g, &RotatedMap::scale(0.5), 3, SelectionPolicy::MinAbs).unwrap();
        for t in [0.0, 0.7, 2.0, 3.3, 5.9] {
            let v = tr.vp_lyapunov(t, 0.0, Norm::P(2.0)).unwrap();
            let e = tr.energy_at_time(t, Norm::P(2.0)).unwrap().value;
            assert!((v - e * e).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn ends_retention_keeps_energies() {
        let g = two_cell(1.0, -1.0);
        let opts = EvolveOptions { norms: vec![Norm::P(2.0)], retention: Retention::Ends };
        let tr = evolve_with(&g, &RotatedMap::scale(0.5), 10, SelectionPolicy::MinAbs, &opts).unwrap();
        assert_eq!(tr.energies(Norm::P(2.0)).unwrap().len(), 11);
        assert!(tr.profile(5).is_none());
        assert_eq!(tr.last().values(), &[1.0 / 1024.0, -1.0 / 1024.0]);
        assert!(tr.energy_at_time(3.0, Norm::P(2.0)).is_err());
    }
}
