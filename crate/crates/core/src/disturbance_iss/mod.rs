//! Boundary disturbances `(z_t, -z_x)(t, 1) in Sigma + d(t)`.
//!
//! A disturbance is cut into windows of length 2 and rotated, giving profiles
//! `delta_n(s) = R d(s + 2n + 1)` on `[-1, 1]`; the invariant then evolves by
//! `g_{n+1} in S(g_n - delta_{n,1}) + delta_{n,2}`.

mod comparison;
mod evolve;

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

pub use comparison::{
    comparison_system, iss_check, kinfty_minorant, map_gain_samples, verify_perturbation_rejection, IssReport,
    IssViolation, KInfMinorant, RejectionReport, ScenarioSummary,
};
pub use evolve::evolve_disturbed;

use crate::damping_maps::rotate;
use crate::error::{Error, Result};
use crate::riemann_core::{common_lattice, Norm, SimpleProfile};
use crate::scalar::split_tag;

/// `d = (d1, d2)` held constant on `[t0, t1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DisturbancePiece {
    pub t0: f64,
    pub t1: f64,
    pub d1: f64,
    pub d2: f64,
}

/// What is known about `|d(t)|` for large `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DecayTag {
    /// `d = 0` for `t >= end`.
    Compact {
        end: f64,
    },
    /// `|d(t)| <= amplitude rate^{-t}`, `rate > 1`.
    Geometric {
        amplitude: f64,
        rate: f64,
    },
    /// `|d(t)| <= amplitude (1 + t)^{-power}`.
    Polynomial {
        amplitude: f64,
        power: f64,
    },
    /// `|d(t)| = amplitude` for all large `t`.
    Constant {
        amplitude: f64,
    },
    Unknown,
}

type PairFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

#[derive(Clone)]
enum Source {
    Table(Vec<DisturbancePiece>),
    /// Sampled at the midpoints of `cells` equal cells per window.
    Closed {
        f: PairFn,
        cells: usize,
    },
}

#[derive(Clone)]
pub struct Disturbance {
    source: Source,
    decay: DecayTag,
    tag: String,
}

impl std::fmt::Debug for Disturbance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Disturbance").field("tag", &self.tag).field("decay", &self.decay).finish()
    }
}

/// Cells per window used when sampling closed forms, unless overridden.
pub const DEFAULT_WINDOW_CELLS: usize = 64;

impl Disturbance {
    pub fn zero() -> Self {
        Self { source: Source::Table(Vec::new()), decay: DecayTag::Compact { end: 0.0 }, tag: "zero".into() }
    }

    /// Pieces must be finite-valued with `t0 < t1`, sorted and non-overlapping;
    /// `t1 = inf` is allowed for the last piece.
    pub fn table(mut pieces: Vec<DisturbancePiece>) -> Result<Self> {
        pieces.sort_by(|a, b| a.t0.total_cmp(&b.t0));
        for (i, p) in pieces.iter().enumerate() {
            if !(p.t0 >= 0.0 && p.t0 < p.t1 && p.d1.is_finite() && p.d2.is_finite()) {
                return Err(Error::InvalidProfile(format!("bad disturbance piece {p:?}")));
            }
            if p.t1.is_infinite() && i + 1 != pieces.len() {
                return Err(Error::InvalidProfile("only the last piece may be unbounded".into()));
            }
            if i > 0 && pieces[i - 1].t1 > p.t0 {
                return Err(Error::InvalidProfile(format!("pieces overlap at t = {}", p.t0)));
            }
        }
        let decay = match pieces.last() {
            Some(p) if p.t1.is_infinite() && (p.d1 != 0.0 || p.d2 != 0.0) => {
                DecayTag::Constant { amplitude: p.d1.hypot(p.d2) }
            }
            _ => DecayTag::Compact {
                end: pieces.iter().filter(|q| q.d1 != 0.0 || q.d2 != 0.0).map(|q| q.t1).fold(0.0, f64::max),
            },
        };
        Ok(Self { source: Source::Table(pieces), decay, tag: "table".into() })
    }

    /// Reads `t_start, t_end, d1, d2` rows; a header line is skipped.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Io(e.to_string()))?;
        let mut pieces = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
            let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
            match nums {
                Ok(v) if v.len() == 4 => pieces.push(DisturbancePiece { t0: v[0], t1: v[1], d1: v[2], d2: v[3] }),
                _ if i == 0 => continue,
                _ => {
                    return Err(Error::InvalidProfile(format!("{}: row {} is not four numbers", path.display(), i + 1)))
                }
            }
        }
        let mut d = Self::table(pieces)?;
        d.tag = format!("table:{}", path.display());
        Ok(d)
    }

    /// A closed form with declared decay, sampled per window.
    pub fn closed(
        tag: impl Into<String>,
        f: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static,
        decay: DecayTag,
        cells: usize,
    ) -> Self {
        Self { source: Source::Closed { f: Arc::new(f), cells: cells.max(1) }, decay, tag: tag.into() }
    }

    /// Parses `zero`, `const:d1:d2`, `geometric:d1:d2:r` (`d r^{-t}`),
    /// `poly:d1:d2:k` (`d (1 + t)^{-k}`), `bump:d1:d2:t0:t1` or `table:PATH`.
    pub fn from_tag(tag: &str, cells: usize) -> Result<Self> {
        let (head, a) = split_tag(tag)?;
        let bad = || Error::UnknownTag(tag.to_string());
        let need = |n: usize| if a.len() == n && a.iter().all(|v| v.is_finite()) { Ok(()) } else { Err(bad()) };
        let d = match head {
            "zero" => Self::zero(),
            "const" => {
                need(2)?;
                Self::table(vec![DisturbancePiece { t0: 0.0, t1: f64::INFINITY, d1: a[0], d2: a[1] }])?
            }
            "bump" => {
                need(4)?;
                Self::table(vec![DisturbancePiece { t0: a[2], t1: a[3], d1: a[0], d2: a[1] }])?
            }
            "geometric" => {
                need(3)?;
                let (d1, d2, r) = (a[0], a[1], a[2]);
                if !(r > 1.0) {
                    return Err(bad());
                }
                let decay = DecayTag::Geometric { amplitude: d1.hypot(d2), rate: r };
                Self::closed(tag, move |t| (d1 * r.powf(-t), d2 * r.powf(-t)), decay, cells)
            }
            "poly" => {
                need(3)?;
                let (d1, d2, k) = (a[0], a[1], a[2]);
                if !(k > 0.0) {
                    return Err(bad());
                }
                let decay = DecayTag::Polynomial { amplitude: d1.hypot(d2), power: k };
                Self::closed(tag, move |t| (d1 * (1.0 + t).powf(-k), d2 * (1.0 + t).powf(-k)), decay, cells)
            }
            "table" => {
                let path = tag.split_once(':').map(|(_, p)| p).unwrap_or_default();
                return Self::from_csv(Path::new(path));
            }
            _ => return Err(bad()),
        };
        Ok(d.with_tag(tag))
    }

    fn with_tag(mut self, tag: &str) -> Self {
        self.tag = tag.to_string();
        self
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn decay(&self) -> DecayTag {
        self.decay
    }

    /// True when `d` vanishes identically.
    pub fn is_zero(&self) -> bool {
        matches!(self.decay, DecayTag::Compact { end } if end <= 0.0)
    }

    /// Number of windows `[2n, 2n + 2]` that can carry a nonzero value, if finite.
    pub fn support_windows(&self) -> Option<usize> {
        match self.decay {
            DecayTag::Compact { end } => Some((end / 2.0).ceil().max(0.0) as usize),
            _ => None,
        }
    }

    /// `(s_lo, s_hi, d1, d2)` pieces of `d(s + 2n + 1)` for `s in [-1, 1]`.
    fn window_pieces(&self, n: usize) -> Vec<(f64, f64, f64, f64)> {
        let shift = 2.0 * n as f64 + 1.0;
        match &self.source {
            Source::Table(pieces) => pieces
                .iter()
                .filter_map(|p| {
                    let lo = (p.t0 - shift).max(-1.0);
                    let hi = (p.t1 - shift).min(1.0);
                    (hi > lo).then_some((lo, hi, p.d1, p.d2))
                })
                .collect(),
            Source::Closed { f, cells } => (0..*cells)
                .map(|i| {
                    let lo = -1.0 + 2.0 * i as f64 / *cells as f64;
                    let hi = if i + 1 == *cells { 1.0 } else { -1.0 + 2.0 * (i + 1) as f64 / *cells as f64 };
                    let (d1, d2) = f(0.5 * (lo + hi) + shift);
                    (lo, hi, d1, d2)
                })
                .collect(),
        }
    }
}

/// The two rotated components of `delta_n` on a shared lattice of `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowShift {
    pub first: SimpleProfile,
    pub second: SimpleProfile,
}

impl WindowShift {
    pub fn is_zero(&self) -> bool {
        self.first.values().iter().chain(self.second.values()).all(|&v| v == 0.0)
    }

    /// `L^p` norm of the pointwise Euclidean length `|delta_n(s)|`.
    pub fn norm(&self, p: Norm) -> f64 {
        let len: Vec<f64> = self.first.values().iter().zip(self.second.values()).map(|(a, b)| a.hypot(*b)).collect();
        SimpleProfile::from_parts_unchecked(self.first.breakpoints().to_vec(), len).norm(p)
    }
}

/// `delta_n = R d(. + 2n + 1)` for `n = 0..=N`.
pub fn reduce_disturbance(d: &Disturbance, n: usize) -> Vec<WindowShift> {
    (0..=n)
        .map(|k| {
            let pieces = d.window_pieces(k);
            let mut bps = vec![-1.0];
            let (mut v1, mut v2) = (Vec::new(), Vec::new());
            for (lo, hi, d1, d2) in pieces {
                let last = *bps.last().expect("nonempty");
                if lo > last {
                    bps.push(lo);
                    v1.push(0.0);
                    v2.push(0.0);
                }
                let (r1, r2) = rotate(d1, d2);
                bps.push(hi);
                v1.push(r1);
                v2.push(r2);
            }
            if *bps.last().expect("nonempty") < 1.0 {
                bps.push(1.0);
                v1.push(0.0);
                v2.push(0.0);
            }
            WindowShift {
                first: SimpleProfile::from_parts_unchecked(bps.clone(), v1),
                second: SimpleProfile::from_parts_unchecked(bps, v2),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Membership {
    Member,
    NotMember,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DpReport {
    /// `|D_N|_p` of the partial sum over the first `N` windows.
    pub partial: f64,
    /// Upper bound on `|D|_p` when the tail is controlled, otherwise the partial value.
    pub estimate: f64,
    pub tail_bound: Option<f64>,
    pub membership: Membership,
}

/// Tests `D(s) = sum_n |d(s + 2n + 1)|` for membership in `L^p(-1, 1)`
/// using `n_tail` windows and the decay tag for the rest.
pub fn check_dp(d: &Disturbance, p: Norm, n_tail: usize) -> DpReport {
    // Compact disturbances are summed exactly.
    let n_tail = n_tail.max(1).max(d.support_windows().unwrap_or(0));
    let shifts = reduce_disturbance(d, n_tail - 1);
    let lat = common_lattice(shifts.iter().map(|w| w.first.breakpoints()));
    let mut sum = vec![0.0; lat.len() - 1];
    for w in &shifts {
        let a = w.first.refine(&lat).expect("shared endpoints");
        let b = w.second.refine(&lat).expect("shared endpoints");
        for (i, s) in sum.iter_mut().enumerate() {
            *s += a.values()[i].hypot(b.values()[i]);
        }
    }
    let partial = SimpleProfile::from_parts_unchecked(lat, sum).norm(p);
    let width = match p {
        Norm::Inf => 1.0,
        Norm::P(e) => 2f64.powf(1.0 / e),
    };
    let first_tail_time = 2.0 * n_tail as f64;
    let (tail, membership) = match d.decay() {
        DecayTag::Compact { .. } => (Some(0.0), Membership::Member),
        DecayTag::Geometric { amplitude, rate } => {
            let q = rate.powi(-2);
            (Some(width * amplitude * rate.powf(-first_tail_time) / (1.0 - q)), Membership::Member)
        }
        DecayTag::Polynomial { amplitude, power } if power > 1.0 => {
            // sum_{n >= N} (1 + 2n)^{-k} <= (2N - 1)^{1-k} / (2(k - 1)) for N >= 1.
            let s = (first_tail_time - 1.0).powf(1.0 - power) / (2.0 * (power - 1.0));
            (Some(width * amplitude * s), Membership::Member)
        }
        DecayTag::Polynomial { amplitude, .. } | DecayTag::Constant { amplitude } if amplitude > 0.0 => {
            (None, Membership::NotMember)
        }
        DecayTag::Polynomial { .. } | DecayTag::Constant { .. } => (Some(0.0), Membership::Member),
        DecayTag::Unknown => (None, Membership::Unknown),
    };
    let (estimate, tail_bound) = match tail {
        Some(t) => (partial + t, Some(t)),
        None => (partial, None),
    };
    DpReport { partial, estimate, tail_bound, membership }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::FRAC_1_SQRT_2;

    #[test]
    fn unit_pulse_reduces_to_first_window() {
        let d = Disturbance::table(vec![DisturbancePiece { t0: 0.0, t1: 2.0, d1: 1.0, d2: 0.0 }]).unwrap();
        let w = reduce_disturbance(&d, 3);
        assert_eq!(w[0].first.values(), &[FRAC_1_SQRT_2]);
        assert_eq!(w[0].second.values(), &[-FRAC_1_SQRT_2]);
        assert!(w[1..].iter().all(|x| x.is_zero()));
        assert_eq!(d.support_windows(), Some(1));
    }

    #[test]
    fn zero_disturbance() {
        let w = reduce_disturbance(&Disturbance::zero(), 4);
        assert!(w.iter().all(|x| x.is_zero()));
    }

    #[test]
    fn support_bound_windows() {
        let d = Disturbance::from_tag("bump:1:2:0.5:6", 8).unwrap();
        let w = reduce_disturbance(&d, 6);
        assert!(!w[2].is_zero());
        assert!(w[3..].iter().all(|x| x.is_zero()));
    }

    #[test]
    fn membership() {
        let p = Norm::P(2.0);
        let c = check_dp(&Disturbance::from_tag("bump:1:0:0:3", 16).unwrap(), p, 4);
        assert_eq!(c.membership, Membership::Member);
        assert_eq!(c.tail_bound, Some(0.0));
        let g = check_dp(&Disturbance::from_tag("geometric:1:0:2", 64).unwrap(), p, 10);
        assert_eq!(g.membership, Membership::Member);
        assert!(g.tail_bound.unwrap() < 1e-5);
        assert!(g.estimate >= g.partial);
        let k = check_dp(&Disturbance::from_tag("const:1:0", 4).unwrap(), p, 10);
        assert_eq!(k.membership, Membership::NotMember);
    }
}
