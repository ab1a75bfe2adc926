//! Boundary relations, their rotation into set-valued maps, and branch
//! selection.

mod contraction;
mod hypotheses;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::numeric::{self, FRAC_1_SQRT_2, SQRT_2};
use crate::rate_law::RateLaw;
use crate::scalar::{PiecewiseLinear, ScalarFn};
use crate::sign_map;

pub use contraction::{envelope_table, mu, rho, rho_n, ContractionGrid};
pub use hypotheses::{check_hypotheses, check_single_valued, HypothesisEntry, HypothesisReport, SampleGrid, Status};

/// Branch values of a set-valued map at one point, sorted ascending.
pub type Branches = SmallVec<[f64; 4]>;

/// A map given directly in rotated coordinates.
#[derive(Clone)]
pub enum ExplicitMap {
    /// `x -> {c x}`.
    Scale(f64),
    /// Single-valued piecewise-linear map.
    Table(PiecewiseLinear),
    /// Union of the branches of several maps.
    Union(Vec<ExplicitMap>),
    /// `x -> {sgn(x) Q(|x|)}` for a rate law, optionally scaled by a factor.
    RateEquality { law: RateLaw, factor: f64 },
    /// Arbitrary branch function.
    Custom { name: String, f: Arc<dyn Fn(f64) -> Branches + Send + Sync> },
}

impl fmt::Debug for ExplicitMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExplicitMap::Scale(c) => write!(f, "Scale({c})"),
            ExplicitMap::Table(_) => write!(f, "Table"),
            ExplicitMap::Union(v) => f.debug_list().entries(v).finish(),
            ExplicitMap::RateEquality { law, factor } => write!(f, "RateEquality({}, {factor})", law.tag()),
            ExplicitMap::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Relation {
    FunctionGraph { sigma: ScalarFn },
    SignGraph { m: f64 },
    SectorBand { lower: ScalarFn, upper: ScalarFn },
    ExplicitRotated(ExplicitMap),
}

/// A boundary set in the `(z_t, -z_x)` plane together with the range over
/// which it is sampled.
#[derive(Clone, Debug)]
pub struct BoundaryRelation {
    pub relation: Relation,
    pub domain_bound: f64,
}

impl BoundaryRelation {
    pub fn function_graph(sigma: ScalarFn, domain_bound: f64) -> Self {
        Self { relation: Relation::FunctionGraph { sigma }, domain_bound }
    }

    pub fn sign_graph(m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidRelation(format!("sign level must be positive, got {m}")));
        }
        Ok(Self { relation: Relation::SignGraph { m }, domain_bound: 10.0 * m.max(1.0) })
    }

    pub fn sector_band(lower: ScalarFn, upper: ScalarFn, domain_bound: f64) -> Result<Self> {
        let rel = Self { relation: Relation::SectorBand { lower, upper }, domain_bound };
        rel.validate()?;
        Ok(rel)
    }

    pub fn explicit(map: ExplicitMap, domain_bound: f64) -> Self {
        Self { relation: Relation::ExplicitRotated(map), domain_bound }
    }

    /// The band between `0` and the saturation `clamp(u, -level, level)`.
    pub fn saturation_band(level: f64) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::InvalidRelation(format!("saturation level must be positive, got {level}")));
        }
        let lower = PiecewiseLinear::new(vec![-level, 0.0], vec![-level, 0.0], 0.0, 0.0)?;
        let upper = PiecewiseLinear::new(vec![0.0, level], vec![0.0, level], 0.0, 0.0)?;
        Self::sector_band(
            ScalarFn::table(format!("min0-saturation:{level}"), lower),
            ScalarFn::table(format!("max0-saturation:{level}"), upper),
            10.0 * level.max(1.0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.domain_bound > 0.0) {
            return Err(Error::InvalidRelation("domain bound must be positive".into()));
        }
        let grid = numeric::symmetric_grid(self.domain_bound, 500);
        match &self.relation {
            Relation::FunctionGraph { sigma } => {
                if let Some(x) = grid.iter().find(|&&x| !sigma.eval(x).is_finite()) {
                    return Err(Error::InvalidRelation(format!("sigma is not finite at {x}")));
                }
            }
            Relation::SignGraph { m } if !(*m > 0.0) => {
                return Err(Error::InvalidRelation("sign level must be positive".into()));
            }
            Relation::SectorBand { lower, upper } => {
                if let Some(x) = grid.iter().find(|&&x| !(lower.eval(x) <= upper.eval(x))) {
                    return Err(Error::InvalidRelation(format!("band lower > upper at {x}")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether `x y >= 0` on the sample grid; decides the damping clamp.
    fn damping_on_samples(&self) -> bool {
        let grid = numeric::symmetric_grid(self.domain_bound, 500);
        match &self.relation {
            Relation::FunctionGraph { sigma } => grid.iter().all(|&x| x * sigma.eval(x) >= 0.0),
            Relation::SignGraph { .. } => true,
            Relation::SectorBand { lower, upper } => {
                grid.iter().all(|&x| x * lower.eval(x) >= 0.0 && x * upper.eval(x) >= 0.0)
            }
            Relation::ExplicitRotated(m) => {
                grid.iter().all(|&x| explicit_eval(m, x).iter().all(|y| y.abs() <= x.abs() * (1.0 + 1e-12)))
            }
        }
    }
}

/// Evaluation accuracy knobs for [`rotate_relation`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// Number of scan cells used to bracket roots for closed-form `sigma`.
    pub scan: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { scan: 2000 }
    }
}

/// One affine piece of a rotated graph, parametrized by the first coordinate.
#[derive(Clone, Copy, Debug)]
struct RotSeg {
    u_lo: f64,
    u_hi: f64,
    u0: f64,
    v0: f64,
    slope: f64,
    /// Vertical piece: at `u0` the map takes every value in `[v_lo, v_hi]`;
    /// `u_lo, u_hi` then hold the two extreme values.
    vertical: bool,
}

fn rotate_pieces(pl: &PiecewiseLinear, out: &mut Vec<RotSeg>) -> Result<()> {
    for pc in pl.pieces() {
        let u0 = (pc.x0 + pc.y0) * FRAC_1_SQRT_2;
        let v0 = (pc.y0 - pc.x0) * FRAC_1_SQRT_2;
        let at = |x: f64| -> (f64, f64) {
            if x.is_infinite() {
                let du = x.signum() * (1.0 + pc.slope);
                let dv = x.signum() * (pc.slope - 1.0);
                (if du == 0.0 { u0 } else { du * f64::INFINITY }, if dv == 0.0 { v0 } else { dv * f64::INFINITY })
            } else {
                let y = pc.y0 + pc.slope * (x - pc.x0);
                ((x + y) * FRAC_1_SQRT_2, (y - x) * FRAC_1_SQRT_2)
            }
        };
        let (ua, va) = at(pc.lo);
        let (ub, vb) = at(pc.hi);
        if pc.slope == -1.0 {
            if !(va.is_finite() && vb.is_finite()) {
                return Err(Error::InvalidRelation("graph contains an unbounded anti-diagonal ray".into()));
            }
            out.push(RotSeg { u_lo: va.min(vb), u_hi: va.max(vb), u0, v0, slope: 0.0, vertical: true });
        } else {
            out.push(RotSeg {
                u_lo: ua.min(ub),
                u_hi: ua.max(ub),
                u0,
                v0,
                slope: (pc.slope - 1.0) / (pc.slope + 1.0),
                vertical: false,
            });
        }
    }
    Ok(())
}

fn eval_segments(segs: &[RotSeg], u: f64, out: &mut Branches) {
    for s in segs {
        if s.vertical {
            if u == s.u0 {
                out.push(s.u_lo);
                out.push(s.u_hi);
            }
        } else if u >= s.u_lo && u <= s.u_hi {
            out.push(s.v0 + s.slope * (u - s.u0));
        }
    }
}

enum Kernel {
    Scale(f64),
    Sign {
        m: f64,
    },
    Segments(Vec<RotSeg>),
    Extremes(Vec<RotSeg>),
    /// Closed form of the rotated saturation band: the extremes
    /// `-x` and `-sign(x) (|x| - reach)^+`.
    SaturationBand {
        reach: f64,
    },
    Bracket {
        sigma: ScalarFn,
        reach: f64,
        scan: usize,
    },
    Explicit(ExplicitMap),
    Composed {
        first: RotatedMap,
        second: RotatedMap,
    },
}

fn explicit_eval(m: &ExplicitMap, x: f64) -> Branches {
    let mut out = Branches::new();
    explicit_into(m, x, &mut out);
    out
}

fn explicit_into(m: &ExplicitMap, x: f64, out: &mut Branches) {
    match m {
        ExplicitMap::Scale(c) => out.push(c * x),
        ExplicitMap::Table(pl) => out.push(pl.eval(x)),
        ExplicitMap::Union(ms) => ms.iter().for_each(|m| explicit_into(m, x, out)),
        ExplicitMap::RateEquality { law, factor } => {
            if let Ok(q) = law.capital_q(x.abs()) {
                out.push(factor * x.signum() * q);
            }
        }
        ExplicitMap::Custom { f, .. } => out.extend(f(x)),
    }
}

/// The set-valued map `S` whose graph is the rotated boundary set.
#[derive(Clone)]
pub struct RotatedMap {
    kernel: Arc<Kernel>,
    provenance: Option<Arc<BoundaryRelation>>,
    branch_bound: usize,
    clamp: bool,
    label: String,
}

impl fmt::Debug for RotatedMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RotatedMap").field("label", &self.label).field("clamp", &self.clamp).finish()
    }
}

/// Rotates a boundary relation into its set-valued map.
pub fn rotate_relation(rel: &BoundaryRelation, res: Resolution) -> Result<RotatedMap> {
    rel.validate()?;
    let (kernel, bound, label) = match &rel.relation {
        Relation::FunctionGraph { sigma } => match sigma.as_table() {
            Some(pl) => {
                let mut segs = Vec::new();
                rotate_pieces(pl, &mut segs)?;
                let n = segs.len() + 2;
                (Kernel::Segments(segs), n, format!("graph[{}]", sigma.name()))
            }
            None => {
                let grid = numeric::symmetric_grid(rel.domain_bound, 500);
                let growth = grid.iter().fold(0.0f64, |m, &x| m.max(sigma.eval(x).abs()));
                let reach = growth.max(10.0);
                (
                    Kernel::Bracket { sigma: sigma.clone(), reach, scan: res.scan.max(8) },
                    16,
                    format!("graph[{}]", sigma.name()),
                )
            }
        },
        Relation::SignGraph { m } => (Kernel::Sign { m: *m }, 1, format!("sign[{m}]")),
        Relation::SectorBand { lower, upper } => {
            let (Some(lo), Some(up)) = (lower.as_table(), upper.as_table()) else {
                return Err(Error::InvalidRelation("sector band bounds must be piecewise linear".into()));
            };
            let mut segs = Vec::new();
            rotate_pieces(lo, &mut segs)?;
            rotate_pieces(up, &mut segs)?;
            (Kernel::Extremes(segs), 2, format!("band[{}, {}]", lower.name(), upper.name()))
        }
        Relation::ExplicitRotated(m) => (Kernel::Explicit(m.clone()), 16, format!("explicit[{m:?}]")),
    };
    Ok(RotatedMap {
        kernel: Arc::new(kernel),
        provenance: Some(Arc::new(rel.clone())),
        branch_bound: bound,
        clamp: rel.damping_on_samples(),
        label,
    })
}

impl RotatedMap {
    /// `x -> {c x}`.
    pub fn scale(c: f64) -> Self {
        let rel = BoundaryRelation::explicit(ExplicitMap::Scale(c), 10.0);
        RotatedMap {
            kernel: Arc::new(Kernel::Scale(c)),
            provenance: Some(Arc::new(rel)),
            branch_bound: 1,
            clamp: c.abs() <= 1.0,
            label: format!("scale[{c}]"),
        }
    }

    /// The rotated sign map at level `m`.
    pub fn sign(m: f64) -> Result<Self> {
        rotate_relation(&BoundaryRelation::sign_graph(m)?, Resolution::default())
    }

    /// The rotated [`BoundaryRelation::saturation_band`] at level `c/sqrt2`,
    /// evaluated in closed form. Its branches satisfy `|x| - c <= |y| <= |x|`.
    pub fn saturation_band(c: f64) -> Result<Self> {
        let rel = BoundaryRelation::saturation_band(c * FRAC_1_SQRT_2)?;
        Ok(RotatedMap {
            kernel: Arc::new(Kernel::SaturationBand { reach: c }),
            provenance: Some(Arc::new(rel)),
            branch_bound: 2,
            clamp: true,
            label: format!("saturation-band[{c}]"),
        })
    }

    pub fn explicit(map: ExplicitMap, domain_bound: f64) -> Result<Self> {
        rotate_relation(&BoundaryRelation::explicit(map, domain_bound), Resolution::default())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn provenance(&self) -> Option<&BoundaryRelation> {
        self.provenance.as_deref()
    }

    pub fn branch_bound(&self) -> usize {
        self.branch_bound
    }

    /// True when every branch is clamped to `|y| <= |x|`.
    pub fn is_damping(&self) -> bool {
        self.clamp
    }

    /// All branch values at `x`, sorted ascending without duplicates.
    pub fn eval(&self, x: f64) -> Result<Branches> {
        let mut out = Branches::new();
        match &*self.kernel {
            Kernel::Scale(c) => out.push(c * x),
            Kernel::Sign { m } => out.push(sign_map::sign_s_level(x, *m)),
            Kernel::Segments(segs) => {
                eval_segments(segs, x, &mut out);
                if out.is_empty() {
                    return Err(Error::NoBranchFound { x });
                }
            }
            Kernel::Extremes(segs) => {
                eval_segments(segs, x, &mut out);
                if out.is_empty() {
                    return Err(Error::NoBranchFound { x });
                }
                let lo = out.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                out.clear();
                out.push(lo);
                out.push(hi);
            }
            Kernel::SaturationBand { reach } => {
                let (lo, hi) = saturation_extremes(x, *reach);
                out.push(lo);
                out.push(hi);
            }
            Kernel::Bracket { sigma, reach, scan } => {
                bracket_roots(sigma, x, *reach, *scan, &mut out);
                if out.is_empty() {
                    return Err(Error::NoBranchFound { x });
                }
            }
            Kernel::Explicit(m) => explicit_into(m, x, &mut out),
            Kernel::Composed { first, second } => {
                for y in first.eval(x)? {
                    for z in second.eval(-y)? {
                        out.push(-z);
                    }
                }
            }
        }
        finish(&mut out);
        if self.clamp {
            let ax = x.abs();
            for y in out.iter_mut() {
                if y.abs() > ax {
                    *y = ax.copysign(*y);
                }
            }
            finish(&mut out);
        }
        if out.len() > self.branch_bound {
            return Err(Error::BranchOverflow { x, count: out.len(), bound: self.branch_bound });
        }
        Ok(out)
    }

    /// The branch chosen by `policy` at `x`.
    #[inline]
    pub fn eval_selected(&self, x: f64, policy: &SelectionPolicy) -> Result<f64> {
        if let Kernel::Sign { m } = &*self.kernel {
            return Ok(sign_map::sign_s_level(x, *m));
        }
        if let Kernel::Scale(c) = &*self.kernel {
            return Ok(c * x);
        }
        if let Kernel::SaturationBand { reach } = &*self.kernel {
            let (lo, hi) = saturation_extremes(x, *reach);
            return Ok(if lo == hi { lo } else { policy.select(x, &[lo, hi]) });
        }
        let b = self.eval(x)?;
        if b.is_empty() {
            return Err(Error::EmptyValueSet { x });
        }
        Ok(policy.select(x, &b))
    }
}

/// Sorted extremes of the rotated saturation band at `x`, with `-0.0` mapped to `0.0`.
#[inline]
fn saturation_extremes(x: f64, reach: f64) -> (f64, f64) {
    let a = x.abs();
    let r = (a - reach).max(0.0);
    if x >= 0.0 {
        (-a + 0.0, -r + 0.0)
    } else {
        (r, a)
    }
}

fn finish(out: &mut Branches) {
    if out.len() > 1 {
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-11 * a.abs().max(b.abs()).max(1.0));
    }
    for y in out.iter_mut() {
        if *y == 0.0 {
            *y = 0.0;
        }
    }
}

fn bracket_roots(sigma: &ScalarFn, u: f64, reach: f64, scan: usize, out: &mut Branches) {
    let h = |y: f64| sigma.eval((u - y) * FRAC_1_SQRT_2) - (u + y) * FRAC_1_SQRT_2;
    let lo = -u.abs() - reach;
    let hi = u.abs() + reach;
    let width = (hi - lo) / scan as f64;
    let mut ya = lo;
    let mut ha = h(ya);
    if ha == 0.0 {
        out.push(ya);
    }
    for k in 1..=scan {
        let yb = if k == scan { hi } else { lo + width * k as f64 };
        let hb = h(yb);
        if hb == 0.0 {
            out.push(yb);
        } else if ha != 0.0 && ha.signum() != hb.signum() {
            if let Some(r) = numeric::bisect(h, ya, yb, 0.0) {
                out.push(r);
            }
        }
        ya = yb;
        ha = hb;
    }
}

/// `x -> {z : z in -S1(y), y in -S0(x)}`.
pub fn compose_negated(s0: &RotatedMap, s1: &RotatedMap) -> RotatedMap {
    RotatedMap {
        kernel: Arc::new(Kernel::Composed { first: s0.clone(), second: s1.clone() }),
        provenance: None,
        branch_bound: s0.branch_bound * s1.branch_bound,
        clamp: s0.clamp && s1.clamp,
        label: format!("compose[{}, {}]", s0.label, s1.label),
    }
}

/// Deterministic rule for picking one branch of a set-valued map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SelectionPolicy {
    #[default]
    MinAbs,
    MaxAbs,
    FixedBranch {
        index: usize,
    },
    Seeded {
        seed: u64,
    },
}

/// Stream constant for the per-value generator of [`SelectionPolicy::Seeded`].
const SEEDED_STREAM: u64 = 0xa02b_dbf7_bb3c_0a7a;

impl SelectionPolicy {
    /// Picks from a sorted, nonempty branch list.
    #[inline]
    pub fn select(&self, x: f64, branches: &[f64]) -> f64 {
        match self {
            SelectionPolicy::MinAbs => extreme_abs(branches, |a, b| a < b),
            SelectionPolicy::MaxAbs => extreme_abs(branches, |a, b| a > b),
            SelectionPolicy::FixedBranch { index } => branches[(*index).min(branches.len() - 1)],
            SelectionPolicy::Seeded { seed } => {
                if branches.len() == 1 {
                    return branches[0];
                }
                let mut rng = rand_pcg::Pcg32::new(seed.rotate_left(29) ^ x.to_bits(), SEEDED_STREAM);
                branches[rng.gen_range(0..branches.len())]
            }
        }
    }
}

/// Branch with the best absolute value; ties go to the nonnegative value.
fn extreme_abs(branches: &[f64], better: impl Fn(f64, f64) -> bool) -> f64 {
    let mut best = branches[0];
    for &y in &branches[1..] {
        if better(y.abs(), best.abs()) || (y.abs() == best.abs() && y >= 0.0) {
            best = y;
        }
    }
    best
}

/// `x_0 = x0, x_{k+1} = eval_selected(S, x_k)`, `n + 1` values.
pub fn iterate_map(s: &RotatedMap, x0: f64, n: usize, policy: &SelectionPolicy) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n + 1);
    let mut x = x0;
    out.push(x);
    for _ in 0..n {
        x = s.eval_selected(x, policy)?;
        out.push(x);
    }
    Ok(out)
}

/// Rotation `R(a, b) = ((a + b)/sqrt2, (b - a)/sqrt2)`.
#[inline]
pub fn rotate(a: f64, b: f64) -> (f64, f64) {
    ((a + b) * FRAC_1_SQRT_2, (b - a) * FRAC_1_SQRT_2)
}

/// Inverse rotation.
#[inline]
pub fn rotate_back(u: f64, v: f64) -> (f64, f64) {
    ((u - v) / SQRT_2, (u + v) / SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(tag: &str) -> RotatedMap {
        rotate_relation(
            &BoundaryRelation::function_graph(ScalarFn::from_tag(tag).unwrap(), 10.0),
            Resolution::default(),
        )
        .unwrap()
    }

    fn closed_graph(a: f64) -> RotatedMap {
        let s = ScalarFn::closed("lin", move |x| a * x);
        rotate_relation(&BoundaryRelation::function_graph(s, 10.0), Resolution::default()).unwrap()
    }

    #[test]
    fn rotation_examples_exact_and_bracketed() {
        assert_eq!(graph("zero").eval(1.0).unwrap().as_slice(), &[-1.0]);
        assert_eq!(graph("identity").eval(0.7).unwrap().as_slice(), &[0.0]);
        let v = graph("linear:3").eval(1.0).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v[0] - 0.5).abs() < 1e-15);
        // Bisection oracle on the closed forms.
        let z = rotate_relation(
            &BoundaryRelation::function_graph(ScalarFn::closed("zero", |_| 0.0), 10.0),
            Resolution::default(),
        )
        .unwrap();
        assert!((z.eval(1.0).unwrap()[0] + 1.0).abs() < 1e-13);
        assert!((closed_graph(3.0).eval(1.0).unwrap()[0] - 0.5).abs() < 1e-13);
        assert!(closed_graph(1.0).eval(0.7).unwrap()[0].abs() < 1e-13);
    }

    #[test]
    fn selection_examples() {
        let s = RotatedMap::sign(SQRT_2).unwrap();
        for p in [SelectionPolicy::MinAbs, SelectionPolicy::MaxAbs, SelectionPolicy::Seeded { seed: 3 }] {
            assert_eq!(s.eval_selected(2.0, &p).unwrap(), 0.0);
        }
        let two =
            RotatedMap::explicit(ExplicitMap::Union(vec![ExplicitMap::Scale(-1.0), ExplicitMap::Scale(0.5)]), 10.0)
                .unwrap();
        assert_eq!(two.eval_selected(1.0, &SelectionPolicy::MinAbs).unwrap(), 0.5);
        assert_eq!(two.eval_selected(1.0, &SelectionPolicy::MaxAbs).unwrap(), -1.0);
        assert_eq!(two.eval_selected(1.0, &SelectionPolicy::FixedBranch { index: 9 }).unwrap(), 0.5);
        assert_eq!(graph("saturation:1").eval_selected(0.0, &SelectionPolicy::MinAbs).unwrap(), 0.0);
        assert_eq!(SelectionPolicy::MinAbs.select(1.0, &[-0.5, 0.5]), 0.5);
    }

    #[test]
    fn empty_value_set_reported() {
        let empty =
            RotatedMap::explicit(ExplicitMap::Custom { name: "empty".into(), f: Arc::new(|_| Branches::new()) }, 1.0)
                .unwrap();
        assert_eq!(empty.eval_selected(1.0, &SelectionPolicy::MinAbs), Err(Error::EmptyValueSet { x: 1.0 }));
    }

    #[test]
    fn iterate_examples() {
        let s = RotatedMap::sign(SQRT_2).unwrap();
        assert_eq!(iterate_map(&s, 3.0, 4, &SelectionPolicy::MinAbs).unwrap(), vec![3.0, -1.0, -1.0, -1.0, -1.0]);
        assert_eq!(iterate_map(&graph("identity"), 5.0, 2, &SelectionPolicy::MinAbs).unwrap(), vec![5.0, 0.0, 0.0]);
        assert_eq!(
            iterate_map(&RotatedMap::scale(0.5), 1.0, 3, &SelectionPolicy::MinAbs).unwrap(),
            vec![1.0, 0.5, 0.25, 0.125]
        );
    }

    #[test]
    fn composition_examples() {
        let id = RotatedMap::scale(1.0);
        let s = graph("saturation:1");
        let c = compose_negated(&id, &s);
        for x in [-3.0, -0.4, 0.0, 0.9, 2.5] {
            let want: Vec<f64> = s.eval(-x).unwrap().iter().map(|v| -v).collect();
            assert_eq!(c.eval(x).unwrap().to_vec(), want);
        }
        let c2 = compose_negated(&RotatedMap::scale(-1.0), &RotatedMap::scale(0.5));
        assert_eq!(c2.eval(1.0).unwrap().as_slice(), &[-0.5]);
        let z = compose_negated(&graph("identity"), &graph("identity"));
        assert_eq!(z.eval(4.0).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn branch_overflow_detected() {
        let many = RotatedMap::explicit(
            ExplicitMap::Custom {
                name: "many".into(),
                f: Arc::new(|x| (0..40).map(|k| x * k as f64 / 100.0).collect()),
            },
            1.0,
        )
        .unwrap();
        assert!(matches!(many.eval(1.0), Err(Error::BranchOverflow { .. })));
    }

    #[test]
    fn no_branch_reported() {
        // sigma(x) = -x makes x + sigma constant: the rotated graph is a single vertical line.
        let m = rotate_relation(
            &BoundaryRelation::function_graph(ScalarFn::closed("neg", |x| -x), 10.0),
            Resolution::default(),
        )
        .unwrap();
        assert!(matches!(m.eval(1.0), Err(Error::NoBranchFound { .. })));
    }

    #[test]
    fn band_returns_extremes() {
        let band = BoundaryRelation::sector_band(
            ScalarFn::from_tag("half-saturation:1").unwrap(),
            ScalarFn::from_tag("saturation:1").unwrap(),
            10.0,
        );
        // lower > upper for negative x with these two bounds.
        assert!(band.is_err());
        let band = BoundaryRelation::sector_band(
            ScalarFn::from_tag("linear:0.5").unwrap(),
            ScalarFn::from_tag("linear:2").unwrap(),
            10.0,
        );
        assert!(band.is_err());
        let band = BoundaryRelation::sector_band(
            ScalarFn::from_tag("zero").unwrap(),
            ScalarFn::from_tag("zero").unwrap(),
            10.0,
        )
        .unwrap();
        let m = rotate_relation(&band, Resolution::default()).unwrap();
        assert_eq!(m.eval(1.0).unwrap().as_slice(), &[-1.0]);
    }

    #[test]
    fn rotation_round_trip() {
        let r = rotate(0.3, -1.7);
        let (a, b) = rotate_back(r.0, r.1);
        assert!((a - 0.3).abs() < 1e-15 && (b + 1.7).abs() < 1e-15);
    }

    #[test]
    fn saturation_band_closed_form_matches_rotation() {
        let fast = RotatedMap::saturation_band(2.0).unwrap();
        let slow = rotate_relation(&BoundaryRelation::saturation_band(SQRT_2).unwrap(), Resolution::default()).unwrap();
        for k in -400..=400 {
            let x = k as f64 * 0.0137;
            let (a, b) = (fast.eval(x).unwrap(), slow.eval(x).unwrap());
            assert_eq!(a.len(), b.len(), "x = {x}");
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12 * x.abs().max(1.0), "x = {x}: {a:?} vs {b:?}");
            }
            for pol in [SelectionPolicy::MinAbs, SelectionPolicy::MaxAbs, SelectionPolicy::Seeded { seed: 3 }] {
                assert_eq!(fast.eval_selected(x, &pol).unwrap(), pol.select(x, &a));
            }
        }
        // |x| - C <= |y| <= |x| with C = 2.
        assert_eq!(fast.eval(5.0).unwrap().as_slice(), &[-5.0, -3.0]);
        assert_eq!(fast.eval(-1.0).unwrap().as_slice(), &[0.0, 1.0]);
    }
}
