//! Strings damped at both ends: invariants `h_n, g_n` on `[-1, 0]` with
//! `h_{n+1} = -S1(g_n)` and `g_{n+1} = -S0(h_n)`.

use serde::Serialize;

use super::evolve::step_values;
use super::{common_lattice, power_sum, Norm, SimpleProfile};
use crate::damping_maps::{RotatedMap, SelectionPolicy};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct TwoBoundaryTrajectory {
    pub lattice: Vec<f64>,
    pub h: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub norms: Vec<Norm>,
    /// `energies[k][n]`: `(|h_n|^p + |g_n|^p)^{1/p}`, or the larger sup norm.
    pub energies: Vec<Vec<f64>>,
}

/// Splits a single-boundary `g0` on `[-1, 1]` into `(h0, g0)` on `[-1, 0]`:
/// `g0` is the left half and `h0(s) = -g0(s + 1)`.
pub fn split_for_two_boundary(g: &SimpleProfile) -> Result<(SimpleProfile, SimpleProfile)> {
    if g.lo() != -1.0 || g.hi() != 1.0 {
        return Err(Error::InvalidProfile("expected a profile on [-1, 1]".into()));
    }
    let bps = g.breakpoints();
    let lat = common_lattice([bps, &[0.0]]);
    let full = g.refine(&lat)?;
    let k = lat.iter().position(|&b| b == 0.0).expect("0 was inserted");
    let left = SimpleProfile::on_interval(lat[..=k].to_vec(), full.values()[..k].to_vec())?;
    let right_bps: Vec<f64> = lat[k..].iter().map(|b| b - 1.0).collect();
    let right = SimpleProfile::on_interval(right_bps, full.values()[k..].iter().map(|v| -v).collect())?;
    Ok((right, left))
}

fn energy(lat: &[f64], h: &[f64], g: &[f64], p: Norm) -> f64 {
    match p {
        Norm::Inf => power_sum(lat, h, p).max(power_sum(lat, g, p)),
        _ => p.root(power_sum(lat, h, p) + power_sum(lat, g, p)),
    }
}

pub fn evolve_two_boundary(
    h0: &SimpleProfile,
    g0: &SimpleProfile,
    s0: &RotatedMap,
    s1: &RotatedMap,
    n: usize,
    policy: SelectionPolicy,
    norms: &[Norm],
) -> Result<TwoBoundaryTrajectory> {
    for p in [h0, g0] {
        if p.lo() != -1.0 || p.hi() != 0.0 {
            return Err(Error::InvalidProfile("two-boundary profiles live on [-1, 0]".into()));
        }
    }
    let lattice = common_lattice([h0.breakpoints(), g0.breakpoints()]);
    let mut h = vec![h0.refine(&lattice)?.values().to_vec()];
    let mut g = vec![g0.refine(&lattice)?.values().to_vec()];
    for k in 0..n {
        let hn = step_values(&g[k], |_, v| Ok(-s1.eval_selected(v, &policy)?))?;
        let gn = step_values(&h[k], |_, v| Ok(-s0.eval_selected(v, &policy)?))?;
        h.push(hn);
        g.push(gn);
    }
    let energies = norms.iter().map(|&p| h.iter().zip(&g).map(|(a, b)| energy(&lattice, a, b, p)).collect()).collect();
    Ok(TwoBoundaryTrajectory { lattice, h, g, norms: norms.to_vec(), energies })
}

impl TwoBoundaryTrajectory {
    pub fn energies(&self, p: Norm) -> Option<&[f64]> {
        self.norms.iter().position(|&q| q == p).map(|k| self.energies[k].as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann_core::evolve;

    #[test]
    fn split_halves() {
        let g = SimpleProfile::new(vec![-1.0, -0.5, 0.5, 1.0], vec![1.0, 2.0, 3.0]).unwrap();
        let (h0, g0) = split_for_two_boundary(&g).unwrap();
        assert_eq!(g0.breakpoints(), &[-1.0, -0.5, 0.0]);
        assert_eq!(g0.values(), &[1.0, 2.0]);
        assert_eq!(h0.breakpoints(), &[-1.0, -0.5, 0.0]);
        assert_eq!(h0.values(), &[-2.0, -3.0]);
    }

    #[test]
    fn zero_maps_kill_in_one_step() {
        let z = RotatedMap::scale(0.0);
        let p = SimpleProfile::on_interval(vec![-1.0, -0.4, 0.0], vec![2.0, -3.0]).unwrap();
        let tr = evolve_two_boundary(&p, &p, &z, &z, 3, SelectionPolicy::MinAbs, &[Norm::P(2.0)]).unwrap();
        assert!(tr.energies(Norm::P(2.0)).unwrap()[1..].iter().all(|&e| e == 0.0));
    }

    #[test]
    fn reflection_and_half_give_half_per_step() {
        let s0 = RotatedMap::scale(-1.0);
        let s1 = RotatedMap::scale(0.5);
        let p = SimpleProfile::on_interval(vec![-1.0, -0.4, 0.0], vec![2.0, -3.0]).unwrap();
        let tr = evolve_two_boundary(&p, &p, &s0, &s1, 6, SelectionPolicy::MinAbs, &[Norm::P(2.0)]).unwrap();
        // h_{n+2} = (-S1)(-S0)(h_n) = -h_n / 2.
        for n in 0..4 {
            for (a, b) in tr.h[n + 2].iter().zip(&tr.h[n]) {
                assert_eq!(*a, -b / 2.0);
            }
        }
    }

    #[test]
    fn dirichlet_left_matches_single_boundary() {
        let g = SimpleProfile::new(vec![-1.0, -0.3, 0.2, 1.0], vec![1.5, -2.0, 0.7]).unwrap();
        let s = RotatedMap::scale(0.5);
        let single = evolve(&g, &s, 4, SelectionPolicy::MinAbs).unwrap();
        let (h0, g0) = split_for_two_boundary(&g).unwrap();
        let two =
            evolve_two_boundary(&h0, &g0, &RotatedMap::scale(1.0), &s, 8, SelectionPolicy::MinAbs, &[Norm::P(2.0)])
                .unwrap();
        for t in 0..=8 {
            let a = single.energy_at_time(t as f64, Norm::P(2.0)).unwrap().value;
            let b = two.energies(Norm::P(2.0)).unwrap()[t];
            assert!((a - b).abs() <= 1e-12 * a.max(1.0), "t = {t}: {a} vs {b}");
        }
    }
}
