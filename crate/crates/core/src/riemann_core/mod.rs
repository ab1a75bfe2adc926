//! Riemann-invariant profiles, the isometry with wave initial data, exact
//! evolution and energy bookkeeping.

mod evolve;
mod two_boundary;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::FRAC_1_SQRT_2;

pub use evolve::{evolve, evolve_with, EvolveOptions, Retention, Trajectory};
pub(crate) use evolve::{step_values, TrajectoryBuilder};
pub use two_boundary::{evolve_two_boundary, split_for_two_boundary, TwoBoundaryTrajectory};

/// Norm index `p` in `[1, inf]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Norm {
    P(f64),
    Inf,
}

impl Norm {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(Norm::Inf)
        } else if p >= 1.0 && p.is_finite() {
            Ok(Norm::P(p))
        } else {
            Err(Error::UnknownTag(format!("norm index {p}")))
        }
    }

    pub fn exponent(self) -> f64 {
        match self {
            Norm::P(p) => p,
            Norm::Inf => f64::INFINITY,
        }
    }

    /// `|v|^p`; the identity on `|v|` for `p = inf`.
    #[inline]
    pub fn power(self, v: f64) -> f64 {
        match self {
            Norm::P(p) if p == 1.0 => v.abs(),
            Norm::P(p) if p == 2.0 => v * v,
            Norm::P(p) => v.abs().powf(p),
            Norm::Inf => v.abs(),
        }
    }

    /// Inverse of [`Norm::power`] on nonnegative sums.
    #[inline]
    pub fn root(self, s: f64) -> f64 {
        match self {
            Norm::P(p) if p == 1.0 => s,
            Norm::P(p) if p == 2.0 => s.sqrt(),
            Norm::P(p) => s.powf(1.0 / p),
            Norm::Inf => s,
        }
    }

    /// Parses a comma list such as `1,2,inf`.
    pub fn parse_list(s: &str) -> Result<Vec<Norm>> {
        s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse()).collect()
    }

    /// Column label used in CSV output, e.g. `e_2` or `e_inf`.
    pub fn column(self) -> String {
        format!("e_{self}")
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::P(p) => write!(f, "{p}"),
            Norm::Inf => write!(f, "inf"),
        }
    }
}

impl FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "Inf" => Ok(Norm::Inf),
            t => Norm::new(t.parse::<f64>().map_err(|_| Error::UnknownTag(format!("norm '{t}'")))?),
        }
    }
}

impl From<Norm> for String {
    fn from(n: Norm) -> String {
        n.to_string()
    }
}

impl TryFrom<String> for Norm {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A piecewise-constant function: value `values[i]` on the half-open cell
/// `(breakpoints[i], breakpoints[i+1]]`. Profiles of the single-boundary
/// problem live on `[-1, 1]`; the two-boundary problem uses `[-1, 0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpleProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl SimpleProfile {
    /// A profile on `[-1, 1]`.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let p = Self::on_interval(breakpoints, values)?;
        if p.lo() != -1.0 || p.hi() != 1.0 {
            return Err(Error::InvalidProfile("breakpoints must run from -1 to 1".into()));
        }
        Ok(p)
    }

    /// A profile on the interval spanned by its breakpoints.
    pub fn on_interval(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::InvalidProfile(format!(
                "{} breakpoints for {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidProfile("breakpoints must be strictly increasing".into()));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile("breakpoints and values must be finite".into()));
        }
        Ok(Self { breakpoints, values })
    }

    pub(crate) fn from_parts_unchecked(breakpoints: Vec<f64>, values: Vec<f64>) -> Self {
        Self { breakpoints, values }
    }

    pub fn constant(c: f64) -> Self {
        Self { breakpoints: vec![-1.0, 1.0], values: vec![c] }
    }

    /// `m` equal cells on `[lo, hi]` with values `f(midpoint)`.
    pub fn sample(lo: f64, hi: f64, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let bps: Vec<f64> = (0..=m).map(|i| if i == m { hi } else { lo + (hi - lo) * i as f64 / m as f64 }).collect();
        let vals = bps.windows(2).map(|w| f(0.5 * (w[0] + w[1]))).collect();
        Self::on_interval(bps, vals)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn lo(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn hi(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    /// Value at `s`, using the cell `(b_{i-1}, b_i]`; the left endpoint
    /// belongs to the first cell.
    pub fn value_at(&self, s: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b < s);
        self.values[i.saturating_sub(1).min(self.values.len() - 1)]
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { breakpoints: self.breakpoints.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// `sum |v_i|^p w_i`, or the max of `|v_i|` for `p = inf`.
    pub fn power_sum(&self, p: Norm) -> f64 {
        power_sum(&self.breakpoints, &self.values, p)
    }

    /// The `L^p` norm, exact up to rounding.
    pub fn norm(&self, p: Norm) -> f64 {
        p.root(self.power_sum(p))
    }

    /// The same function on a finer lattice that contains every breakpoint.
    pub fn refine(&self, lattice: &[f64]) -> Result<Self> {
        if lattice.first() != Some(&self.lo()) || lattice.last() != Some(&self.hi()) {
            return Err(Error::InvalidProfile("refinement lattice has different endpoints".into()));
        }
        let mut vals = Vec::with_capacity(lattice.len() - 1);
        let mut j = 0;
        for w in lattice.windows(2) {
            while self.breakpoints[j + 1] < w[1] {
                j += 1;
            }
            if self.breakpoints[j] > w[0] {
                return Err(Error::InvalidProfile("lattice does not refine the profile".into()));
            }
            vals.push(self.values[j]);
        }
        Ok(Self { breakpoints: lattice.to_vec(), values: vals })
    }
}

pub(crate) fn power_sum(bps: &[f64], vals: &[f64], p: Norm) -> f64 {
    match p {
        Norm::Inf => vals.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        _ => bps.windows(2).zip(vals).map(|(w, &v)| p.power(v) * (w[1] - w[0])).sum(),
    }
}

/// Sorted union of breakpoint sets.
pub fn common_lattice<'a>(sets: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut all: Vec<f64> = sets.into_iter().flatten().copied().collect();
    all.sort_by(|a, b| a.total_cmp(b));
    all.dedup();
    all
}

/// `L^p` norm of the difference of two profiles on the same interval.
pub fn distance(a: &SimpleProfile, b: &SimpleProfile, p: Norm) -> Result<f64> {
    let lat = common_lattice([a.breakpoints(), b.breakpoints()]);
    let (ra, rb) = (a.refine(&lat)?, b.refine(&lat)?);
    let diff: Vec<f64> = ra.values.iter().zip(&rb.values).map(|(x, y)| x - y).collect();
    Ok(p.root(power_sum(&lat, &diff, p)))
}

/// Wave initial data `(z0', z1)` on `[0, 1]`, with `z0(0) = 0` implied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub z0_prime: SimpleProfile,
    pub z1: SimpleProfile,
}

impl InitialData {
    pub fn new(z0_prime: SimpleProfile, z1: SimpleProfile) -> Result<Self> {
        for p in [&z0_prime, &z1] {
            if p.lo() != 0.0 || p.hi() != 1.0 {
                return Err(Error::InvalidProfile("initial data must live on [0, 1]".into()));
            }
        }
        Ok(Self { z0_prime, z1 })
    }

    fn on_common_lattice(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let lat = common_lattice([self.z0_prime.breakpoints(), self.z1.breakpoints()]);
        let a = self.z0_prime.refine(&lat).expect("same endpoints");
        let b = self.z1.refine(&lat).expect("same endpoints");
        (lat, a.values, b.values)
    }

    /// Norm of `(z0, z1)` in the energy space:
    /// `2^{-p/2} \int (|z0' + z1|^p + |z0' - z1|^p)`, and
    /// `max(|z0' + z1|, |z0' - z1|)/sqrt2` for `p = inf`.
    pub fn norm(&self, p: Norm) -> f64 {
        let (lat, u, v) = self.on_common_lattice();
        let plus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        match p {
            Norm::Inf => FRAC_1_SQRT_2 * power_sum(&lat, &plus, p).max(power_sum(&lat, &minus, p)),
            Norm::P(_) => {
                let s = power_sum(&lat, &plus, p) + power_sum(&lat, &minus, p);
                FRAC_1_SQRT_2 * p.root(s)
            }
        }
    }

    /// The invariant `g0` on `[-1, 1]`:
    /// `g0(-s) = (z1(s) - z0'(s))/sqrt2`, `g0(s) = -(z1(s) + z0'(s))/sqrt2`.
    pub fn to_invariant(&self) -> SimpleProfile {
        let (lat, u, v) = self.on_common_lattice();
        let m = lat.len() - 1;
        let mut bps = Vec::with_capacity(2 * m + 1);
        bps.extend(lat.iter().rev().map(|c| -c));
        bps.extend(&lat[1..]);
        if bps[m] == -0.0 {
            bps[m] = 0.0;
        }
        let mut vals = Vec::with_capacity(2 * m);
        vals.extend((0..m).rev().map(|j| (v[j] - u[j]) * FRAC_1_SQRT_2));
        vals.extend((0..m).map(|j| -(v[j] + u[j]) * FRAC_1_SQRT_2));
        SimpleProfile::from_parts_unchecked(bps, vals)
    }

    /// Inverse of [`InitialData::to_invariant`].
    pub fn from_invariant(g: &SimpleProfile) -> Result<Self> {
        if g.lo() != -1.0 || g.hi() != 1.0 {
            return Err(Error::InvalidProfile("invariant profile must live on [-1, 1]".into()));
        }
        let mut lat: Vec<f64> = g.breakpoints().iter().map(|b| b.abs()).collect();
        lat.sort_by(|a, b| a.total_cmp(b));
        lat.dedup();
        if lat[0] != 0.0 {
            lat.insert(0, 0.0);
        }
        let (mut zp, mut z1) = (Vec::new(), Vec::new());
        for w in lat.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let (a, b) = (g.value_at(-mid), g.value_at(mid));
            z1.push((a - b) * FRAC_1_SQRT_2);
            zp.push(-(a + b) * FRAC_1_SQRT_2);
        }
        Self::new(SimpleProfile::on_interval(lat.clone(), zp)?, SimpleProfile::on_interval(lat, z1)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::SQRT_2;

    fn unit(vals: Vec<f64>, bps: Vec<f64>) -> SimpleProfile {
        SimpleProfile::on_interval(bps, vals).unwrap()
    }

    #[test]
    fn energy_examples() {
        let c = SimpleProfile::constant(-1.5);
        assert!((c.norm(Norm::P(3.0)) - 2f64.powf(1.0 / 3.0) * 1.5).abs() < 1e-15);
        assert_eq!(c.norm(Norm::Inf), 1.5);
        let g = SimpleProfile::new(vec![-1.0, 0.0, 1.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(g.norm(Norm::P(2.0)), 5.0);
    }

    #[test]
    fn to_invariant_examples() {
        let c = 0.8;
        let data = InitialData::new(unit(vec![0.0], vec![0.0, 1.0]), unit(vec![c], vec![0.0, 1.0])).unwrap();
        let g = data.to_invariant();
        assert_eq!(g.breakpoints(), &[-1.0, 0.0, 1.0]);
        assert_eq!(g.values(), &[c * FRAC_1_SQRT_2, -c * FRAC_1_SQRT_2]);
        let zero = InitialData::new(unit(vec![0.0], vec![0.0, 1.0]), unit(vec![0.0], vec![0.0, 1.0])).unwrap();
        assert!(zero.to_invariant().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_invariant_examples() {
        let d = InitialData::from_invariant(&SimpleProfile::constant(1.0)).unwrap();
        assert_eq!(d.z1.values(), &[0.0]);
        assert!((d.z0_prime.values()[0] + SQRT_2).abs() < 1e-15);
        let c = 1.3;
        let g = SimpleProfile::new(vec![-1.0, 0.0, 1.0], vec![c / SQRT_2, -c / SQRT_2]).unwrap();
        let d = InitialData::from_invariant(&g).unwrap();
        assert!((d.z1.values()[0] - c).abs() < 1e-15);
        assert!(d.z0_prime.values()[0].abs() < 1e-15);
    }

    #[test]
    fn isometry_small_case() {
        let data = InitialData::new(
            unit(vec![1.0, -2.0], vec![0.0, 0.3, 1.0]),
            unit(vec![0.5, 0.25, 3.0], vec![0.0, 0.1, 0.6, 1.0]),
        )
        .unwrap();
        let g = data.to_invariant();
        for p in [Norm::P(1.0), Norm::P(2.0), Norm::P(3.0), Norm::P(10.0), Norm::Inf] {
            let a = g.norm(p);
            let b = data.norm(p);
            assert!((a - b).abs() <= 1e-12 * b, "{p}: {a} vs {b}");
        }
    }

    #[test]
    fn refine_and_value_at() {
        let g = SimpleProfile::new(vec![-1.0, 0.0, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(g.value_at(-1.0), 1.0);
        assert_eq!(g.value_at(0.0), 1.0);
        assert_eq!(g.value_at(0.5), 2.0);
        let r = g.refine(&[-1.0, -0.5, 0.0, 0.5, 1.0]).unwrap();
        assert_eq!(r.values(), &[1.0, 1.0, 2.0, 2.0]);
        assert!(g.refine(&[-1.0, 1.0]).is_err());
    }

    #[test]
    fn norm_list_parses() {
        assert_eq!(Norm::parse_list("1, 2,inf").unwrap(), vec![Norm::P(1.0), Norm::P(2.0), Norm::Inf]);
        assert!(Norm::parse_list("0.5").is_err());
        assert_eq!(Norm::Inf.column(), "e_inf");
    }

    #[test]
    fn profile_validation() {
        assert!(SimpleProfile::new(vec![-1.0, 1.0], vec![f64::NAN]).is_err());
        assert!(SimpleProfile::new(vec![-1.0, 0.5], vec![1.0]).is_err());
        assert!(SimpleProfile::new(vec![-1.0, 0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
    }
}
