use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{self, FRAC_1_SQRT_2};
use crate::rate_law::RateLaw;
use crate::riemann_core::{power_sum, Norm, Retention, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundMode {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub t: f64,
    pub energy: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayBoundReport {
    pub mode: BoundMode,
    pub p: Norm,
    pub rows: Vec<BoundRow>,
    pub holds: bool,
    pub first_violation: Option<f64>,
    /// Lower mode: `C1`, `C_z` and the step the constants were read from.
    pub c1: Option<f64>,
    pub c_z: Option<f64>,
    pub n0: Option<usize>,
    /// Lower mode without any cell inside the small ball: the bound is the constant `C1`.
    pub fallback: bool,
}

const REL: f64 = 1e-12;

/// Times at which both sides are evaluated: half-integers when every profile
/// is retained, even integers otherwise.
fn time_grid(traj: &Trajectory) -> Vec<f64> {
    let n = traj.steps();
    match traj.retention() {
        Retention::All => (0..=4 * n).map(|k| 0.5 * k as f64).collect(),
        Retention::Ends => (0..=n).map(|k| 2.0 * k as f64).collect(),
    }
}

fn energy(traj: &Trajectory, t: f64, p: Norm) -> Result<f64> {
    if t.fract() == 0.0 && (t as usize) % 2 == 0 {
        traj.energy_step(t as usize / 2, p)
    } else {
        traj.energy_at_time(t, p).map(|r| r.value)
    }
}

/// Sorted distinct `|g_n|` over every retained profile.
fn value_range(traj: &Trajectory) -> Vec<f64> {
    let mut v: Vec<f64> =
        (0..=traj.steps()).filter_map(|n| traj.profile(n)).flat_map(|g| g.values().to_vec()).map(f64::abs).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v
}

/// Checks every branch of the trajectory's map at `+-x` against `Q(x)` for
/// the sampled values `0 < x <= M/sqrt2`.
fn check_rate_on_values(traj: &Trajectory, q: &RateLaw, mode: BoundMode) -> Result<()> {
    let top = q.radius() * FRAC_1_SQRT_2;
    for x in value_range(traj).into_iter().filter(|&x| x > 0.0 && x <= top) {
        let qx = q.capital_q(x)?;
        for y in [x, -x].into_iter().map(|s| traj.map().eval(s)).collect::<Result<Vec<_>>>()?.concat() {
            let ok = match mode {
                BoundMode::Upper => y.abs() <= qx * (1.0 + REL),
                BoundMode::Lower => y.abs() >= qx * (1.0 - REL),
            };
            if !ok {
                return Err(Error::HypothesisMismatch(format!(
                    "branch {y} at |x| = {x} is on the wrong side of Q(x) = {qx}"
                )));
            }
        }
    }
    Ok(())
}

/// Evaluates the decay bound of the given mode on the trajectory's time grid.
///
/// Upper mode needs `|g_0| <= M/sqrt2`. For `p = inf` the bound is
/// `Q^[floor(t/2)](e_inf(0))`; for finite `p` it is the cellwise bound
/// `| Q^[floor(t/2)](|g_0|) |_p`, which follows from the same pointwise
/// estimate and is never weaker.
///
/// Lower mode reads `C_z` and its measure from the first retained profile with
/// cells in `0 < |g| <= M/sqrt2`. At even times the bound is
/// `C1 Q^[n](C_z)`, elsewhere `C1 Q^[floor(t/2)](Q(C_z))`.
pub fn check_decay_bounds(traj: &Trajectory, q: &RateLaw, mode: BoundMode, p: Norm) -> Result<DecayBoundReport> {
    check_rate_on_values(traj, q, mode)?;
    let steps = traj.steps();
    let top = q.radius() * FRAC_1_SQRT_2;
    let g0 = traj.initial();
    let mut report = DecayBoundReport {
        mode,
        p,
        rows: Vec::new(),
        holds: true,
        first_violation: None,
        c1: None,
        c_z: None,
        n0: None,
        fallback: false,
    };
    // bound_at[n] for n = 0..=steps + 1, indexed by the number of applications.
    let bound_at: Vec<f64> = match mode {
        BoundMode::Upper => {
            let e_inf = g0.norm(Norm::Inf);
            if e_inf > top * (1.0 + REL) {
                return Err(Error::HypothesisMismatch(format!("e_inf(0) = {e_inf} exceeds M/sqrt2 = {top}")));
            }
            match p {
                Norm::Inf => q.iterate(e_inf, steps + 1)?.values,
                Norm::P(_) => {
                    let mut distinct: Vec<f64> = g0.values().iter().map(|v| v.abs()).collect();
                    distinct.sort_by(|a, b| a.total_cmp(b));
                    distinct.dedup();
                    let orbits: Vec<Vec<f64>> =
                        distinct.iter().map(|&v| q.iterate(v, steps + 1).map(|it| it.values)).collect::<Result<_>>()?;
                    let lookup = |v: f64| distinct.binary_search_by(|d| d.total_cmp(&v.abs())).unwrap_or(0);
                    let idx: Vec<usize> = g0.values().iter().map(|&v| lookup(v)).collect();
                    (0..=steps + 1)
                        .map(|n| {
                            let vals: Vec<f64> =
                                idx.iter().map(|&i| if distinct[i] == 0.0 { 0.0 } else { orbits[i][n] }).collect();
                            p.root(power_sum(g0.breakpoints(), &vals, p))
                        })
                        .collect()
                }
            }
        }
        BoundMode::Lower => {
            let found = (0..=steps).filter_map(|n| traj.profile(n).map(|g| (n, g))).find_map(|(n, g)| {
                let cells: Vec<(f64, f64)> = g
                    .values()
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.abs() > 0.0 && v.abs() <= top)
                    .map(|(i, v)| (v.abs(), g.breakpoints()[i + 1] - g.breakpoints()[i]))
                    .collect();
                (!cells.is_empty()).then(|| {
                    let c_z = cells.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
                    let measure: f64 = cells.iter().map(|c| c.1).sum();
                    (n, c_z, measure)
                })
            });
            match found {
                Some((n0, c_z, measure)) => {
                    let c1 = match p {
                        Norm::Inf => 1.0,
                        Norm::P(e) => measure.powf(1.0 / e),
                    };
                    report.c1 = Some(c1);
                    report.c_z = Some(c_z);
                    report.n0 = Some(n0);
                    q.iterate(c_z, steps + 1)?.values.into_iter().map(|v| c1 * v).collect()
                }
                None => {
                    let support: f64 = g0
                        .values()
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(i, _)| g0.breakpoints()[i + 1] - g0.breakpoints()[i])
                        .sum();
                    let c1 = match p {
                        Norm::Inf => top,
                        Norm::P(e) => support.powf(1.0 / e) * top,
                    };
                    report.c1 = Some(c1);
                    report.fallback = true;
                    vec![c1; steps + 2]
                }
            }
        }
    };
    for t in time_grid(traj) {
        let e = energy(traj, t, p)?;
        let half = (t / 2.0).floor() as usize;
        let even = t.fract() == 0.0 && (t as usize) % 2 == 0;
        let (bound, ok) = match mode {
            BoundMode::Upper => {
                let b = bound_at[half];
                (b, e <= b * (1.0 + REL))
            }
            BoundMode::Lower => {
                let b = if even { bound_at[half] } else { bound_at[half + 1] };
                (b, e >= b * (1.0 - REL))
            }
        };
        if !ok && report.holds {
            report.holds = false;
            report.first_violation = Some(t);
        }
        report.rows.push(BoundRow { t, energy: e, bound });
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GesReport {
    /// Sector slope `sup |y|/|x|` of the map over the initial value range.
    pub mu: f64,
    pub lambda: f64,
    /// Tightest `C` with `e_p(t) <= C e^{-lambda t} e_p(0)` on the samples.
    pub c_fit: f64,
    /// Constant the sector argument guarantees: `e^{2 lambda} = 1/mu`.
    pub c_theory: f64,
    pub holds: bool,
    pub samples: usize,
}

/// Exponential stability check with `lambda = -ln(mu)/2`.
pub fn ges_check(traj: &Trajectory, p: Norm) -> Result<GesReport> {
    let g0 = traj.initial();
    let extent = g0.norm(Norm::Inf);
    let mut mu = 0.0f64;
    if extent > 0.0 {
        for x in numeric::symmetric_grid(extent, 1000) {
            if x == 0.0 {
                continue;
            }
            for y in traj.map().eval(x)? {
                mu = mu.max(y.abs() / x.abs());
            }
        }
    }
    let times = time_grid(traj);
    let e0 = energy(traj, 0.0, p)?;
    let energies: Vec<(f64, f64)> = times.iter().map(|&t| energy(traj, t, p).map(|e| (t, e))).collect::<Result<_>>()?;
    if mu == 0.0 {
        // The zero map empties the window after one round trip.
        let holds = energies.iter().all(|&(t, e)| t < 2.0 || e == 0.0);
        return Ok(GesReport {
            mu,
            lambda: f64::INFINITY,
            c_fit: 1.0,
            c_theory: f64::INFINITY,
            holds,
            samples: energies.len(),
        });
    }
    let lambda = -0.5 * mu.ln();
    let c_theory = 1.0 / mu;
    let c_fit =
        if e0 == 0.0 { 0.0 } else { energies.iter().map(|&(t, e)| e * (lambda * t).exp() / e0).fold(0.0, f64::max) };
    let holds = lambda > 0.0 && (e0 == 0.0 || c_fit <= c_theory * (1.0 + 1e-12));
    Ok(GesReport { mu, lambda, c_fit, c_theory, holds, samples: energies.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::damping_maps::{ExplicitMap, RotatedMap, SelectionPolicy};
    use crate::riemann_core::{evolve, SimpleProfile};

    fn q_map(q: &RateLaw, factor: f64) -> RotatedMap {
        RotatedMap::explicit(ExplicitMap::RateEquality { law: q.clone(), factor }, f64::INFINITY).unwrap()
    }

    #[test]
    fn equality_trajectory_is_tight() {
        let q = RateLaw::linear(0.5);
        let g0 = SimpleProfile::constant(0.1);
        let traj = evolve(&g0, &q_map(&q, 1.0), 8, SelectionPolicy::MinAbs).unwrap();
        let up = check_decay_bounds(&traj, &q, BoundMode::Upper, Norm::Inf).unwrap();
        let lo = check_decay_bounds(&traj, &q, BoundMode::Lower, Norm::Inf).unwrap();
        assert!(up.holds && lo.holds);
        for (a, b) in up.rows.iter().zip(&lo.rows) {
            if a.t.fract() == 0.0 && (a.t as usize) % 2 == 0 {
                assert_eq!(a.bound, b.bound, "t = {}", a.t);
                assert_eq!(a.energy, a.bound);
            }
        }
    }

    #[test]
    fn half_map_has_slack() {
        let q = RateLaw::linear(0.5);
        let g0 = SimpleProfile::new(vec![-1.0, 0.0, 1.0], vec![0.1, -0.05]).unwrap();
        let traj = evolve(&g0, &q_map(&q, 0.5), 6, SelectionPolicy::MinAbs).unwrap();
        for p in [Norm::P(1.0), Norm::P(2.0), Norm::Inf] {
            let r = check_decay_bounds(&traj, &q, BoundMode::Upper, p).unwrap();
            assert!(r.holds);
            assert!(r.rows.last().unwrap().energy < r.rows.last().unwrap().bound);
        }
        assert!(matches!(
            check_decay_bounds(&traj, &q, BoundMode::Lower, Norm::Inf),
            Err(Error::HypothesisMismatch(_))
        ));
    }

    #[test]
    fn ges_examples() {
        let g0 = SimpleProfile::new(vec![-1.0, 0.3, 1.0], vec![1.0, -2.0]).unwrap();
        let half = evolve(&g0, &RotatedMap::scale(0.5), 10, SelectionPolicy::MinAbs).unwrap();
        let r = ges_check(&half, Norm::P(2.0)).unwrap();
        assert!((r.mu - 0.5).abs() < 1e-15 && r.holds && r.c_fit <= 2.0);
        let zero = evolve(&g0, &RotatedMap::scale(0.0), 3, SelectionPolicy::MinAbs).unwrap();
        assert!(ges_check(&zero, Norm::P(2.0)).unwrap().holds);
        let g_small = SimpleProfile::new(vec![-1.0, 0.3, 1.0], vec![0.5, -0.7]).unwrap();
        let sign =
            evolve(&g_small, &RotatedMap::sign(crate::numeric::SQRT_2).unwrap(), 4, SelectionPolicy::MinAbs).unwrap();
        assert!(!ges_check(&sign, Norm::P(2.0)).unwrap().holds);
    }
}
