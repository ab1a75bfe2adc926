use super::{reduce_disturbance, Disturbance, WindowShift};
use crate::damping_maps::{RotatedMap, SelectionPolicy};
use crate::error::Result;
use crate::riemann_core::{common_lattice, SimpleProfile, Trajectory, TrajectoryBuilder};
use crate::riemann_core::{step_values, EvolveOptions};

/// Evolves `g_{n+1} = S(g_n - delta_{n,1}) + delta_{n,2}` cell by cell.
///
/// The lattice of `g0` is refined once by every breakpoint of the shifts used.
/// Windows whose shift is identically zero take the plain step, so a zero
/// disturbance reproduces the undisturbed trajectory bit for bit.
pub fn evolve_disturbed(
    g0: &SimpleProfile,
    s: &RotatedMap,
    d: &Disturbance,
    n: usize,
    policy: SelectionPolicy,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let shifts = if n == 0 { Vec::new() } else { reduce_disturbance(d, n - 1) };
    let active: Vec<&WindowShift> = shifts.iter().filter(|w| !w.is_zero()).collect();
    let lattice = common_lattice(std::iter::once(g0.breakpoints()).chain(active.iter().map(|w| w.first.breakpoints())));
    let g0 = g0.refine(&lattice)?;
    let mut builder = TrajectoryBuilder::new(&g0, s.clone(), policy, opts);
    let mut cur = g0.values().to_vec();
    for w in &shifts {
        let next = if w.is_zero() {
            step_values(&cur, |_, v| s.eval_selected(v, &policy))?
        } else {
            let a = w.first.refine(&lattice)?;
            let b = w.second.refine(&lattice)?;
            let (a, b) = (a.values(), b.values());
            step_values(&cur, |i, v| Ok(s.eval_selected(v - a[i], &policy)? + b[i]))?
        };
        builder.push(&cur, next.clone());
        cur = next;
    }
    Ok(builder.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturbance_iss::DisturbancePiece;
    use crate::numeric::FRAC_1_SQRT_2;
    use crate::riemann_core::evolve_with;

    #[test]
    fn zero_disturbance_is_bitwise_plain() {
        let g0 = SimpleProfile::sample(-1.0, 1.0, 37, |s| (3.0 * s).sin() + 0.2).unwrap();
        let s = RotatedMap::scale(0.5);
        let opts = EvolveOptions::default();
        let a = evolve_disturbed(&g0, &s, &Disturbance::zero(), 12, SelectionPolicy::MinAbs, &opts).unwrap();
        let b = evolve_with(&g0, &s, 12, SelectionPolicy::MinAbs, &opts).unwrap();
        for n in 0..=12 {
            assert_eq!(a.profile(n), b.profile(n));
        }
    }

    #[test]
    fn single_window_by_hand() {
        let eps = 0.25;
        let d =
            Disturbance::table(vec![DisturbancePiece { t0: 0.0, t1: 2.0, d1: 2f64.sqrt() * eps, d2: 0.0 }]).unwrap();
        let g0 = SimpleProfile::new(vec![-1.0, 0.0, 1.0], vec![1.0, -2.0]).unwrap();
        let t =
            evolve_disturbed(&g0, &RotatedMap::scale(0.5), &d, 2, SelectionPolicy::MinAbs, &EvolveOptions::default())
                .unwrap();
        // R(sqrt2 eps, 0) = (eps, -eps).
        let (d1, d2) = (2f64.sqrt() * eps * FRAC_1_SQRT_2, -(2f64.sqrt() * eps) * FRAC_1_SQRT_2);
        let g1 = t.profile(1).unwrap();
        assert_eq!(g1.values(), &[(1.0 - d1) / 2.0 + d2, (-2.0 - d1) / 2.0 + d2]);
        let g2 = t.profile(2).unwrap();
        assert_eq!(g2.values(), &[g1.values()[0] / 2.0, g1.values()[1] / 2.0]);
    }

    #[test]
    fn bounded_disturbance_keeps_state_bounded() {
        let d = Disturbance::from_tag("const:0.3:-0.2", 8).unwrap();
        let g0 = SimpleProfile::constant(4.0);
        let t =
            evolve_disturbed(&g0, &RotatedMap::scale(0.5), &d, 60, SelectionPolicy::MinAbs, &EvolveOptions::default())
                .unwrap();
        let e = t.energies(crate::riemann_core::Norm::Inf).unwrap();
        assert!(e.iter().skip(20).all(|v| *v < 1.0));
    }
}
