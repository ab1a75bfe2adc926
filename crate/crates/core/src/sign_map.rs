//! Closed forms for the sign boundary relation `{(x, M sgn x)} ∪ {0} × [-M, M]`.
//!
//! Everything here works at the normalized level `M = sqrt2`, where the
//! rotated map reads `x` on `[-1, 1]`, `2 - x` above and `-2 - x` below.
//! [`to_normalized`] and [`from_normalized`] convert other levels.

use crate::numeric::SQRT_2;
use crate::riemann_core::SimpleProfile;

/// The rotated sign map at level `sqrt2`.
#[inline]
pub fn sign_s(x: f64) -> f64 {
    if x > 1.0 {
        2.0 - x
    } else if x < -1.0 {
        -2.0 - x
    } else {
        x
    }
}

/// Number of reflections an orbit starting at `x` undergoes before settling.
#[inline]
fn settle_count(x: f64) -> u64 {
    ((x.abs() + 1.0) / 2.0).floor() as u64
}

/// `n`-fold application of [`sign_s`] in closed form.
///
/// A zero result is returned as `+0.0`, which is what direct iteration yields.
pub fn sign_iterate_closed(x: f64, n: u64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let k = n.min(settle_count(x));
    let m = x.abs() - 2.0 * k as f64;
    if m == 0.0 {
        return 0.0;
    }
    let sgn = if k % 2 == 0 { x.signum() } else { -x.signum() };
    sgn * m
}

/// Cellwise limit `g_inf` of the iteration; a fixed point of [`sign_s`].
pub fn limit_profile(g0: &SimpleProfile) -> SimpleProfile {
    g0.map_values(|v| sign_iterate_closed(v, u64::MAX))
}

/// Time after which the solution equals its limit: `2 floor((|g0|_inf + 1)/2)`.
pub fn settle_time(g0: &SimpleProfile) -> f64 {
    let sup = g0.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    2.0 * ((sup + 1.0) / 2.0).floor()
}

/// Factor taking values at level `m` to the normalized level `sqrt2`.
pub fn to_normalized(x: f64, m: f64) -> f64 {
    if m == SQRT_2 {
        x
    } else {
        x * SQRT_2 / m
    }
}

pub fn from_normalized(x: f64, m: f64) -> f64 {
    if m == SQRT_2 {
        x
    } else {
        x * m / SQRT_2
    }
}

/// The rotated sign map at a general level `m`.
#[inline]
pub fn sign_s_level(x: f64, m: f64) -> f64 {
    if m == SQRT_2 {
        return sign_s(x);
    }
    let xn = to_normalized(x, m);
    if xn.abs() <= 1.0 {
        return x;
    }
    // The round trip through the normalized level may overshoot by an ulp.
    let y = from_normalized(sign_s(xn), m);
    if y.abs() > x.abs() {
        x.abs().copysign(y)
    } else {
        y
    }
}

/// Limit of the iteration at level `m`, computed by running
/// [`sign_s_level`] until it stops moving, so it agrees bitwise with an
/// evolved profile.
pub fn limit_value_level(x: f64, m: f64) -> f64 {
    if m == SQRT_2 {
        return sign_iterate_closed(x, u64::MAX);
    }
    let mut v = x;
    loop {
        let next = sign_s_level(v, m);
        if next.to_bits() == v.to_bits() {
            return v;
        }
        v = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_table() {
        assert_eq!(sign_s(0.5), 0.5);
        assert_eq!(sign_s(2.0), 0.0);
        assert_eq!(sign_s(-3.0), 1.0);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(sign_iterate_closed(3.0, 2), -1.0);
        for n in 0..10 {
            assert_eq!(sign_iterate_closed(0.5, n), 0.5);
        }
        for n in 1..10 {
            assert_eq!(sign_iterate_closed(2.5, n), -0.5);
        }
        assert_eq!(sign_iterate_closed(0.0, 5), 0.0);
    }

    #[test]
    fn closed_form_matches_iteration_bitwise() {
        for i in -10_000..=10_000 {
            let x0 = i as f64 * 1e-3;
            let mut x = x0;
            for n in 0..=20u64 {
                assert_eq!(sign_iterate_closed(x0, n).to_bits(), x.to_bits(), "x0 = {x0}, n = {n}");
                x = sign_s(x);
            }
        }
    }

    #[test]
    fn limit_and_settle_time() {
        let g = SimpleProfile::constant(2.5);
        assert_eq!(limit_profile(&g).values(), &[-0.5]);
        assert_eq!(settle_time(&SimpleProfile::constant(3.0)), 4.0);
        assert_eq!(settle_time(&SimpleProfile::constant(1.0)), 2.0);
        assert_eq!(settle_time(&SimpleProfile::constant(0.5)), 0.0);
        assert_eq!(settle_time(&SimpleProfile::constant(0.0)), 0.0);
        let small = SimpleProfile::new(vec![-1.0, 0.0, 1.0], vec![0.3, -1.0]).unwrap();
        assert_eq!(limit_profile(&small), small);
    }

    #[test]
    fn limit_is_fixed_point() {
        let g = SimpleProfile::new(vec![-1.0, -0.2, 0.4, 1.0], vec![7.3, -4.0, 1.5]).unwrap();
        let lim = limit_profile(&g);
        assert_eq!(lim.map_values(sign_s), lim);
        assert!(lim.values().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn level_scaling_round_trip() {
        let m = 3.0;
        for x in [-5.0, -1.2, 0.3, 2.2, 7.0] {
            let direct = sign_s_level(x, m);
            let via = from_normalized(sign_s(to_normalized(x, m)), m);
            assert!((direct - via).abs() <= 1e-15 * x.abs().max(1.0));
            assert!(direct.abs() <= x.abs());
            assert!((from_normalized(to_normalized(x, m), m) - x).abs() < 1e-15 * x.abs().max(1.0));
        }
    }

    #[test]
    fn level_limit_is_fixed_point() {
        let m = 0.7;
        for x in [-9.1, -0.35, 0.2, 1.4, 6.0] {
            let l = limit_value_level(x, m);
            assert_eq!(sign_s_level(l, m).to_bits(), l.to_bits());
            assert!(l.abs() <= m / SQRT_2 * (1.0 + 1e-15));
        }
    }
}
