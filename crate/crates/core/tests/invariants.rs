use proptest::prelude::*;

use wavedamp::cli::MapSpec;
use wavedamp::damping_maps::{iterate_map, RotatedMap, SelectionPolicy};
use wavedamp::disturbance_iss::{evolve_disturbed, Disturbance};
use wavedamp::riemann_core::{evolve_with, EvolveOptions, InitialData, Norm, Retention, SimpleProfile};
use wavedamp::sign_map::{limit_profile, settle_time, sign_iterate_closed};

/// A profile on `[lo, hi]` with up to `max_cells` cells and values in `[-amp, amp]`.
fn profile_on(lo: f64, hi: f64, max_cells: usize, amp: f64) -> impl Strategy<Value = SimpleProfile> {
    (1..=max_cells)
        .prop_flat_map(move |m| (prop::collection::vec(0.0..1.0f64, m - 1), prop::collection::vec(-amp..=amp, m)))
        .prop_map(move |(mut cuts, vals)| {
            cuts.sort_by(|a, b| a.total_cmp(b));
            let mut bps = vec![lo];
            bps.extend(cuts.iter().map(|c| lo + c * (hi - lo)));
            bps.push(hi);
            // Collapse repeated cuts by dropping the matching cells.
            let mut b = vec![bps[0]];
            let mut v = Vec::new();
            for (i, w) in bps.windows(2).enumerate() {
                if w[1] > *b.last().unwrap() {
                    b.push(w[1]);
                    v.push(vals[i]);
                }
            }
            SimpleProfile::on_interval(b, v).unwrap()
        })
}

fn damping_spec() -> impl Strategy<Value = MapSpec> {
    prop_oneof![
        (-1.0..=1.0f64).prop_map(|factor| MapSpec::Scale { factor }),
        Just(MapSpec::Sign { level: None }),
        (0.2..3.0f64).prop_map(|l| MapSpec::Sign { level: Some(l) }),
        (0.1..4.0f64).prop_map(|reach| MapSpec::SaturationBand { reach }),
        prop_oneof![Just("linear:3"), Just("saturation:1"), Just("tanh:2"), Just("identity")]
            .prop_map(|s| MapSpec::FunctionGraph { sigma: s.into(), domain_bound: 10.0 }),
    ]
}

fn policy() -> impl Strategy<Value = SelectionPolicy> {
    prop_oneof![
        Just(SelectionPolicy::MinAbs),
        Just(SelectionPolicy::MaxAbs),
        any::<u64>().prop_map(|seed| SelectionPolicy::Seeded { seed }),
    ]
}

fn norms() -> Vec<Norm> {
    vec![Norm::P(1.0), Norm::P(2.0), Norm::P(4.5), Norm::Inf]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariant_round_trip_preserves_norms(
        a in profile_on(0.0, 1.0, 8, 5.0),
        b in profile_on(0.0, 1.0, 8, 5.0),
    ) {
        let data = InitialData::new(a, b).unwrap();
        let g = data.to_invariant();
        let back = InitialData::from_invariant(&g).unwrap();
        for p in norms() {
            let (x, y) = (data.norm(p), g.norm(p));
            prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0), "p = {p}: {x} vs {y}");
            prop_assert!((back.norm(p) - x).abs() <= 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn energy_never_increases(
        spec in damping_spec(),
        pol in policy(),
        g0 in profile_on(-1.0, 1.0, 12, 4.0),
        steps in 1usize..6,
    ) {
        let map = spec.build().unwrap();
        let traj = evolve_with(&g0, &map, steps, pol, &EvolveOptions::default()).unwrap();
        for p in [Norm::P(1.0), Norm::P(2.0), Norm::Inf] {
            let mut prev = f64::INFINITY;
            for i in 0..=(8 * steps) {
                let e = traj.energy_at_time(i as f64 / 4.0, p).unwrap().value;
                prop_assert!(e <= prev, "{spec:?} p = {p} t = {}: {e} > {prev}", i as f64 / 4.0);
                prev = e;
            }
        }
    }

    #[test]
    fn energy_at_even_times_is_the_step_norm(
        spec in damping_spec(),
        g0 in profile_on(-1.0, 1.0, 10, 3.0),
    ) {
        let map = spec.build().unwrap();
        let traj = evolve_with(&g0, &map, 4, SelectionPolicy::MinAbs, &EvolveOptions::default()).unwrap();
        for p in [Norm::P(1.0), Norm::P(2.0), Norm::Inf] {
            for n in 0..=4 {
                let e = traj.energy_at_time(2.0 * n as f64, p).unwrap().value;
                let direct = traj.profile(n).unwrap().norm(p);
                prop_assert!((e - direct).abs() <= 1e-13 * direct.max(1.0));
            }
        }
    }

    #[test]
    fn retention_does_not_change_norms(
        spec in damping_spec(),
        pol in policy(),
        g0 in profile_on(-1.0, 1.0, 10, 3.0),
    ) {
        let map = spec.build().unwrap();
        let all = evolve_with(&g0, &map, 7, pol, &EvolveOptions::default()).unwrap();
        let ends = evolve_with(&g0, &map, 7, pol, &EvolveOptions { retention: Retention::Ends, ..EvolveOptions::default() }).unwrap();
        for p in norms().into_iter().filter(|p| all.energies(*p).is_some()) {
            prop_assert_eq!(all.energies(p), ends.energies(p));
        }
        prop_assert_eq!(all.last(), ends.last());
    }

    #[test]
    fn sign_closed_form_matches_iteration(x in -50.0..50.0f64, n in 0u64..40) {
        let map = RotatedMap::sign(std::f64::consts::SQRT_2).unwrap();
        let it = iterate_map(&map, x, n as usize, &SelectionPolicy::MinAbs).unwrap();
        prop_assert_eq!(sign_iterate_closed(x, n).to_bits(), it[n as usize].to_bits());
    }

    #[test]
    fn sign_profiles_freeze_after_settling(g0 in profile_on(-1.0, 1.0, 16, 10.0)) {
        let map = RotatedMap::sign(std::f64::consts::SQRT_2).unwrap();
        let first = (settle_time(&g0) / 2.0).ceil() as usize;
        let traj = evolve_with(&g0, &map, first + 2, SelectionPolicy::MaxAbs, &EvolveOptions::default()).unwrap();
        let lim = limit_profile(&g0);
        for n in first..=first + 2 {
            prop_assert_eq!(traj.profile(n).unwrap(), lim.clone());
        }
    }

    #[test]
    fn zero_disturbance_is_the_plain_evolution(
        spec in damping_spec(),
        pol in policy(),
        g0 in profile_on(-1.0, 1.0, 10, 3.0),
    ) {
        let map = spec.build().unwrap();
        let plain = evolve_with(&g0, &map, 5, pol, &EvolveOptions::default()).unwrap();
        let dist = evolve_disturbed(&g0, &map, &Disturbance::zero(), 5, pol, &EvolveOptions::default()).unwrap();
        for n in 0..=5 {
            prop_assert_eq!(plain.profile(n), dist.profile(n));
        }
    }

    #[test]
    fn contraction_shrinks_distance(
        a in profile_on(-1.0, 1.0, 6, 3.0),
        b in profile_on(-1.0, 1.0, 6, 3.0),
        factor in -0.99..0.99f64,
    ) {
        // For a linear contraction the distance between two runs shrinks by |factor| per step.
        let map = RotatedMap::scale(factor);
        let ta = evolve_with(&a, &map, 3, SelectionPolicy::MinAbs, &EvolveOptions::default()).unwrap();
        let tb = evolve_with(&b, &map, 3, SelectionPolicy::MinAbs, &EvolveOptions::default()).unwrap();
        let d0 = wavedamp::riemann_core::distance(&a, &b, Norm::P(2.0)).unwrap();
        let d3 = wavedamp::riemann_core::distance(&ta.last(), &tb.last(), Norm::P(2.0)).unwrap();
        prop_assert!(d3 <= factor.abs().powi(3) * d0 * (1.0 + 1e-12) + 1e-300);
    }
}
