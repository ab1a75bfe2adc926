//! Sample-based checks of the structural hypotheses on a boundary relation and
//! on its rotated map.
//!
//! Every check runs on finitely many samples, so a pass means "satisfied on
//! samples" and nothing more. A failed check always carries a sample that
//! reproduces the failure; among several failing samples the one whose sup
//! norm is closest to 1 is reported.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{rotate_relation, BoundaryRelation, Relation, Resolution};
use crate::numeric;
use crate::rate_law::RateLaw;
use crate::scalar::ScalarFn;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Status {
    SatisfiedOnSamples,
    Violated { x: f64, y: f64, note: String },
    NotApplicable { reason: String },
}

impl Status {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, Status::SatisfiedOnSamples)
    }

    pub fn witness(&self) -> Option<(f64, f64)> {
        match self {
            Status::Violated { x, y, .. } => Some((*x, *y)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisEntry {
    pub name: String,
    #[serde(flatten)]
    pub status: Status,
    pub constants: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct HypothesisReport {
    pub entries: Vec<HypothesisEntry>,
}

impl HypothesisReport {
    pub fn get(&self, name: &str) -> Option<&HypothesisEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn push(&mut self, name: &str, status: Status, constants: &[(&str, f64)]) {
        self.entries.push(HypothesisEntry {
            name: name.to_string(),
            status,
            constants: constants.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        });
    }
}

/// Where and how densely to sample.
#[derive(Clone, Copy, Debug)]
pub struct SampleGrid {
    /// Half-width of the sampled square; defaults to the relation's domain bound.
    pub extent: Option<f64>,
    /// Samples per half axis.
    pub half: usize,
    /// Radius separating the "near zero" and "at infinity" sector checks.
    pub sector_radius: f64,
    pub resolution: Resolution,
}

impl Default for SampleGrid {
    fn default() -> Self {
        Self { extent: None, half: 1000, sector_radius: 1.0, resolution: Resolution::default() }
    }
}

fn tol(x: f64, y: f64) -> f64 {
    1e-12 * x.abs().max(y.abs()).max(1.0)
}

fn sup_norm(p: &(f64, f64)) -> f64 {
    p.0.abs().max(p.1.abs())
}

fn norm(p: &(f64, f64)) -> f64 {
    p.0.hypot(p.1)
}

/// The failing sample closest to the unit sup-sphere.
fn pick_witness(bad: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    bad.min_by(|a, b| (sup_norm(a) - 1.0).abs().total_cmp(&(sup_norm(b) - 1.0).abs()))
}

fn verdict(samples: &[(f64, f64)], ok: impl Fn(f64, f64) -> bool, note: &str) -> Status {
    match pick_witness(samples.iter().copied().filter(|&(x, y)| !ok(x, y))) {
        None => Status::SatisfiedOnSamples,
        Some((x, y)) => Status::Violated { x, y, note: note.to_string() },
    }
}

fn relation_samples(rel: &BoundaryRelation, grid: &[f64], rotated: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(2 * grid.len());
    match &rel.relation {
        Relation::FunctionGraph { sigma } => out.extend(grid.iter().map(|&x| (x, sigma.eval(x)))),
        Relation::SignGraph { m } => {
            out.extend(grid.iter().filter(|&&x| x != 0.0).map(|&x| (x, m * x.signum())));
            out.extend(grid.iter().filter(|&&y| y.abs() <= *m).map(|&y| (0.0, y)));
            out.push((0.0, *m));
            out.push((0.0, -m));
        }
        Relation::SectorBand { lower, upper } => {
            for &x in grid {
                let (l, u) = (lower.eval(x), upper.eval(x));
                out.push((x, l));
                out.push((x, 0.5 * (l + u)));
                out.push((x, u));
            }
        }
        Relation::ExplicitRotated(_) => {
            out.extend(rotated.iter().map(|&(u, v)| super::rotate_back(u, v)));
        }
    }
    out
}

/// `x + sigma(x)` strictly monotone on the samples; otherwise the first
/// offending pair of abscissae.
pub fn check_single_valued(sigma: &ScalarFn, samples: &[f64]) -> (bool, Option<(f64, f64)>) {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    let mut dir = 0.0;
    for w in xs.windows(2) {
        let d = (w[1] + sigma.eval(w[1])) - (w[0] + sigma.eval(w[0]));
        if d == 0.0 || (dir != 0.0 && d.signum() != dir) {
            return (false, Some((w[0], w[1])));
        }
        dir = d.signum();
    }
    (true, None)
}

/// Ring statistics for the behavior at infinity: `(inner, outer, witness)`.
fn ring_stat(
    samples: &[(f64, f64)],
    value: impl Fn(f64, f64) -> Option<f64>,
    outer_is_max: bool,
) -> Option<(f64, f64, (f64, f64))> {
    let r_max = samples.iter().map(norm).fold(0.0f64, f64::max);
    if r_max == 0.0 {
        return None;
    }
    let pick = |lo: f64, hi: f64| -> Option<(f64, (f64, f64))> {
        let it = samples.iter().filter(|p| {
            let n = norm(p);
            n >= lo * r_max && n <= hi * r_max
        });
        let mut best: Option<(f64, (f64, f64))> = None;
        for &(x, y) in it {
            if let Some(v) = value(x, y) {
                let better = match best {
                    None => true,
                    Some((b, _)) => (outer_is_max && v > b) || (!outer_is_max && v < b),
                };
                if better {
                    best = Some((v, (x, y)));
                }
            }
        }
        best
    };
    let (inner, _) = pick(0.25, 0.5)?;
    let (outer, w) = pick(0.75, 1.0)?;
    Some((inner, outer, w))
}

/// Runs every check on `rel`. Rate checks need `q`; without it they report
/// "not applicable".
pub fn check_hypotheses(rel: &BoundaryRelation, grid: &SampleGrid, q: Option<&RateLaw>) -> HypothesisReport {
    let extent = grid.extent.unwrap_or(rel.domain_bound);
    let xs = numeric::symmetric_grid(extent, grid.half);
    let mut rep = HypothesisReport::default();
    let m_rad = grid.sector_radius;

    let map = rotate_relation(rel, grid.resolution);
    let mut rotated = Vec::with_capacity(xs.len());
    let mut missing = None;
    let mut multi = None;
    let mut growth = 0.0f64;
    if let Ok(map) = &map {
        for &u in &xs {
            match map.eval(u) {
                Ok(b) if !b.is_empty() => {
                    if b.len() > 1 && multi.is_none() {
                        multi = Some((u, b[1]));
                    }
                    let small = b.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                    growth = growth.max(small / u.abs().max(1.0));
                    rotated.extend(b.iter().map(|&v| (u, v)));
                }
                _ => {
                    missing.get_or_insert(u);
                }
            }
        }
    }
    let sigma_pts = relation_samples(rel, &xs, &rotated);

    // Zero in the set.
    let zero = match &rel.relation {
        Relation::FunctionGraph { sigma } => {
            let s0 = sigma.eval(0.0);
            if s0.abs() <= 1e-12 {
                Status::SatisfiedOnSamples
            } else {
                violated(0.0, s0, "sigma(0) != 0")
            }
        }
        Relation::SignGraph { .. } => Status::SatisfiedOnSamples,
        Relation::SectorBand { lower, upper } => {
            if lower.eval(0.0) <= 0.0 && upper.eval(0.0) >= 0.0 {
                Status::SatisfiedOnSamples
            } else {
                violated(0.0, lower.eval(0.0), "band excludes the origin")
            }
        }
        Relation::ExplicitRotated(_) => match &map {
            Ok(m) => match m.eval(0.0) {
                Ok(b) if b.contains(&0.0) => Status::SatisfiedOnSamples,
                Ok(b) => violated(0.0, b.first().copied().unwrap_or(f64::NAN), "0 not in S(0)"),
                Err(e) => violated(0.0, 0.0, &e.to_string()),
            },
            Err(e) => Status::NotApplicable { reason: e.to_string() },
        },
    };
    rep.push("zero-in-set", zero, &[]);

    // Existence with linear growth.
    let exist = match (&map, missing) {
        (Err(e), _) => Status::NotApplicable { reason: e.to_string() },
        (Ok(_), Some(u)) => violated(u, 0.0, "no branch at this abscissa"),
        (Ok(_), None) => Status::SatisfiedOnSamples,
    };
    rep.push("existence-growth", exist, &[("growth", growth)]);

    // Single-valuedness.
    let single = match &rel.relation {
        Relation::FunctionGraph { sigma } => match check_single_valued(sigma, &xs) {
            (true, _) => Status::SatisfiedOnSamples,
            (false, Some((a, b))) => violated(a, b, "x + sigma(x) not strictly monotone between these abscissae"),
            (false, None) => violated(0.0, 0.0, "x + sigma(x) not strictly monotone"),
        },
        _ => match (&map, multi) {
            (Err(e), _) => Status::NotApplicable { reason: e.to_string() },
            (Ok(_), Some((u, v))) => violated(u, v, "second branch of S"),
            (Ok(_), None) => Status::SatisfiedOnSamples,
        },
    };
    rep.push("single-valued", single, &[]);

    rep.push("damping", verdict(&sigma_pts, |x, y| x * y >= 0.0, "x y < 0"), &[]);
    rep.push(
        "strict-damping",
        verdict(&sigma_pts, |x, y| (x == 0.0 && y == 0.0) || x * y > 0.0, "x y <= 0 away from the origin"),
        &[],
    );

    // Behavior at infinity: min(x/y, y/x) -> 0.
    let ratio = |x: f64, y: f64| -> Option<f64> {
        if x == 0.0 || y == 0.0 {
            Some(0.0)
        } else {
            Some((x / y).abs().min((y / x).abs()))
        }
    };
    let at_inf = match ring_stat(&sigma_pts, ratio, true) {
        None => Status::NotApplicable { reason: "no samples away from the origin".into() },
        Some((inner, outer, w)) => {
            if outer == 0.0 || (outer < inner && outer <= 0.25) {
                Status::SatisfiedOnSamples
            } else {
                violated(w.0, w.1, "min(x/y, y/x) does not decrease toward 0 on the outer ring")
            }
        }
    };
    let outer_ratio = ring_stat(&sigma_pts, ratio, true).map(|r| r.1).unwrap_or(f64::NAN);
    rep.push("no-damping-at-infinity", at_inf, &[("outer_ratio", outer_ratio)]);

    // Sectors a|x| <= |y| <= b|x|.
    for (name, near) in [("sector-near-zero", true), ("sector-at-infinity", false)] {
        let pts: Vec<(f64, f64)> = sigma_pts
            .iter()
            .copied()
            .filter(|p| {
                let n = norm(p);
                n > 0.0 && if near { n <= m_rad } else { n >= m_rad }
            })
            .collect();
        let (status, a, b) = sector(&pts);
        rep.push(name, status, &[("M", m_rad), ("a", a), ("b", b)]);
    }

    rate_checks_sigma(&mut rep, &sigma_pts, q, m_rad);

    // Rotated forms.
    if let Err(e) = &map {
        for name in ROTATED {
            rep.push(name, Status::NotApplicable { reason: e.to_string() }, &[]);
        }
        return rep;
    }
    rep.push("rotated-damping", verdict(&rotated, |u, v| v.abs() <= u.abs() + tol(u, v), "|y| > |x|"), &[]);
    rep.push(
        "rotated-strict-damping",
        verdict(&rotated, |u, v| (u == 0.0 && v == 0.0) || v.abs() < u.abs(), "|y| >= |x| away from the origin"),
        &[],
    );
    let rot_ratio = |u: f64, v: f64| if u == 0.0 { None } else { Some((v / u).abs()) };
    let rot_inf = match ring_stat(&rotated, rot_ratio, false) {
        None => Status::NotApplicable { reason: "no samples away from the origin".into() },
        Some((inner, outer, w)) => {
            if outer >= 0.75 && outer >= inner {
                Status::SatisfiedOnSamples
            } else {
                violated(w.0, w.1, "|y/x| does not approach 1 on the outer ring")
            }
        }
    };
    let outer_rot = ring_stat(&rotated, rot_ratio, false).map(|r| r.1).unwrap_or(f64::NAN);
    rep.push("rotated-no-damping-at-infinity", rot_inf, &[("outer_ratio", outer_rot)]);
    for (name, near) in [("rotated-sector-near-zero", true), ("rotated-sector-at-infinity", false)] {
        let pts: Vec<(f64, f64)> = rotated
            .iter()
            .copied()
            .filter(|p| {
                let n = norm(p);
                n > 0.0 && if near { n <= m_rad } else { n >= m_rad }
            })
            .collect();
        let mut mu = 0.0f64;
        let mut bad = Vec::new();
        for &(u, v) in &pts {
            if u == 0.0 {
                bad.push((u, v));
                mu = f64::INFINITY;
            } else {
                mu = mu.max((v / u).abs());
            }
        }
        bad.extend(pts.iter().copied().filter(|&(u, v)| u != 0.0 && (v / u).abs() >= 1.0));
        let status = match pick_witness(bad.into_iter()) {
            None if !pts.is_empty() => Status::SatisfiedOnSamples,
            None => Status::NotApplicable { reason: "no samples in this region".into() },
            Some((u, v)) => violated(u, v, "|y| >= |x|: no contraction factor below 1"),
        };
        rep.push(name, status, &[("M", m_rad), ("mu", mu)]);
    }
    rate_checks_rotated(&mut rep, &rotated, q, m_rad);
    rep
}

const ROTATED: [&str; 7] = [
    "rotated-damping",
    "rotated-strict-damping",
    "rotated-no-damping-at-infinity",
    "rotated-sector-near-zero",
    "rotated-sector-at-infinity",
    "rotated-rate-upper",
    "rotated-rate-lower",
];

fn violated(x: f64, y: f64, note: &str) -> Status {
    Status::Violated { x, y, note: note.to_string() }
}

/// Tightest `a, b` with `a|x| <= |y| <= b|x|` on the samples.
fn sector(pts: &[(f64, f64)]) -> (Status, f64, f64) {
    if pts.is_empty() {
        return (Status::NotApplicable { reason: "no samples in this region".into() }, f64::NAN, f64::NAN);
    }
    let (mut a, mut b) = (f64::INFINITY, 0.0f64);
    for &(x, y) in pts {
        let r = if x == 0.0 { f64::INFINITY } else { (y / x).abs() };
        a = a.min(r);
        b = b.max(r);
    }
    let bad = pts.iter().copied().filter(|&(x, y)| x == 0.0 || y == 0.0 || x * y < 0.0);
    let status = match pick_witness(bad) {
        None => Status::SatisfiedOnSamples,
        Some((x, y)) => violated(x, y, "no sector a|x| <= |y| <= b|x| with 0 < a <= b < inf"),
    };
    (status, a, b)
}

fn rate_checks_sigma(rep: &mut HypothesisReport, pts: &[(f64, f64)], q: Option<&RateLaw>, m_rad: f64) {
    let Some(q) = q else {
        for n in ["rate-upper", "rate-lower"] {
            rep.push(n, Status::NotApplicable { reason: "no rate law supplied".into() }, &[]);
        }
        return;
    };
    let inside: Vec<(f64, f64)> = pts.iter().copied().filter(|p| norm(p) <= m_rad).collect();
    let qa = |s: f64| q.q(s.abs());
    rep.push(
        "rate-upper",
        verdict(
            &inside,
            |x, y| qa(x) <= y.abs() + tol(x, y) && qa(y) <= x.abs() + tol(x, y),
            "q(|x|) > |y| or q(|y|) > |x|",
        ),
        &[("M", m_rad)],
    );
    rep.push(
        "rate-lower",
        verdict(
            &inside,
            |x, y| y.abs() <= qa(x) + tol(x, y) || x.abs() <= qa(y) + tol(x, y),
            "|y| > q(|x|) and |x| > q(|y|)",
        ),
        &[("M", m_rad)],
    );
}

fn rate_checks_rotated(rep: &mut HypothesisReport, pts: &[(f64, f64)], q: Option<&RateLaw>, m_rad: f64) {
    let Some(q) = q else {
        for n in ["rotated-rate-upper", "rotated-rate-lower"] {
            rep.push(n, Status::NotApplicable { reason: "no rate law supplied".into() }, &[]);
        }
        return;
    };
    let lim = m_rad.min(q.radius()) / numeric::SQRT_2;
    let inside: Vec<(f64, f64, f64)> = pts
        .iter()
        .filter(|p| p.0.abs() <= lim)
        .filter_map(|&(u, v)| q.capital_q(u.abs()).ok().map(|qq| (u, v, qq)))
        .collect();
    let pick = |bad: Vec<(f64, f64)>, note: &str| match pick_witness(bad.into_iter()) {
        None => Status::SatisfiedOnSamples,
        Some((u, v)) => violated(u, v, note),
    };
    let up: Vec<(f64, f64)> =
        inside.iter().filter(|(u, v, qq)| v.abs() > qq + tol(*u, *v)).map(|(u, v, _)| (*u, *v)).collect();
    let lo: Vec<(f64, f64)> =
        inside.iter().filter(|(u, v, qq)| v.abs() + tol(*u, *v) < *qq).map(|(u, v, _)| (*u, *v)).collect();
    rep.push("rotated-rate-upper", pick(up, "|y| > Q(|x|)"), &[("M", lim)]);
    rep.push("rotated-rate-lower", pick(lo, "|y| < Q(|x|)"), &[("M", lim)]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::SQRT_2;

    fn report(tag: &str) -> HypothesisReport {
        let rel = BoundaryRelation::function_graph(ScalarFn::from_tag(tag).unwrap(), 10.0);
        check_hypotheses(&rel, &SampleGrid::default(), None)
    }

    #[test]
    fn identity_graph() {
        let r = report("identity");
        assert!(r.get("damping").unwrap().status.is_satisfied());
        assert!(r.get("strict-damping").unwrap().status.is_satisfied());
        for n in ["sector-near-zero", "sector-at-infinity"] {
            let e = r.get(n).unwrap();
            assert!(e.status.is_satisfied());
            assert_eq!(e.constants["a"], 1.0);
            assert_eq!(e.constants["b"], 1.0);
        }
    }

    #[test]
    fn sign_graph_not_strict() {
        let rel = BoundaryRelation::sign_graph(SQRT_2).unwrap();
        let r = check_hypotheses(&rel, &SampleGrid::default(), None);
        assert!(r.get("damping").unwrap().status.is_satisfied());
        let (x, y) = r.get("strict-damping").unwrap().status.witness().unwrap();
        assert_eq!(x, 0.0);
        assert!(y != 0.0);
    }

    #[test]
    fn neumann_min_not_strict() {
        let r = report("min0");
        assert!(r.get("damping").unwrap().status.is_satisfied());
        assert_eq!(r.get("strict-damping").unwrap().status.witness(), Some((1.0, 0.0)));
    }

    #[test]
    fn saturation_no_damping_at_infinity() {
        let r = report("saturation:1");
        assert!(r.get("no-damping-at-infinity").unwrap().status.is_satisfied());
        assert!(r.get("rotated-no-damping-at-infinity").unwrap().status.is_satisfied());
        assert!(!report("linear:2").get("no-damping-at-infinity").unwrap().status.is_satisfied());
    }

    #[test]
    fn rotated_sector_constant() {
        let r = report("linear:3");
        let e = r.get("rotated-sector-near-zero").unwrap();
        assert!(e.status.is_satisfied());
        assert!((e.constants["mu"] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_valued_examples() {
        let xs = numeric::symmetric_grid(5.0, 100);
        assert!(check_single_valued(&ScalarFn::from_tag("identity").unwrap(), &xs).0);
        let (ok, w) = check_single_valued(&ScalarFn::from_tag("linear:-1").unwrap(), &xs);
        assert!(!ok && w.is_some());
        assert!(check_single_valued(&ScalarFn::from_tag("linear:-2").unwrap(), &xs).0);
    }

    #[test]
    fn rate_checks() {
        let law = RateLaw::linear(0.5);
        let rel = BoundaryRelation::function_graph(ScalarFn::from_tag("linear:1").unwrap(), 1.0);
        let r = check_hypotheses(&rel, &SampleGrid::default(), Some(&law));
        assert!(r.get("rate-upper").unwrap().status.is_satisfied());
        assert!(r.get("rotated-rate-upper").unwrap().status.is_satisfied());
        assert!(!r.get("rotated-rate-lower").unwrap().status.is_satisfied());
    }

    #[test]
    fn violated_always_has_witness() {
        for tag in ["zero", "min0", "linear:-1", "saturation:1", "cubic:1"] {
            for e in report(tag).entries {
                if let Status::Violated { x, y, .. } = e.status {
                    assert!(x.is_finite() && y.is_finite(), "{tag} {}", e.name);
                }
            }
        }
    }
}
