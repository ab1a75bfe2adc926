use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{missing, random_profile, MapSpec, ProfileLine, ScenarioConfig};
use super::output::{save_json, save_ndjson, Table};
use crate::damping_maps::{check_hypotheses, envelope_table, ContractionGrid, SampleGrid};
use crate::decay_analysis::{
    self as decay, check_decay_bounds, check_equiv_condition, classify_regime, construct_superexp_counterexample,
    ges_check, iterate_q, lambda_rate, logpow_prediction, psi_sum_check, superexp_params, BoundMode, Regime,
};
use crate::disturbance_iss::{
    evolve_disturbed, iss_check, kinfty_minorant, map_gain_samples, reduce_disturbance, verify_perturbation_rejection,
    DecayTag, Disturbance,
};
use crate::error::{Error, Result};
use crate::numeric::{log_grid_desc, SQRT_2};
use crate::rate_law::RateLaw;
use crate::riemann_core::{
    evolve_two_boundary, evolve_with, split_for_two_boundary, EvolveOptions, Norm, Retention, SimpleProfile, Trajectory,
};
use crate::scalar::{split_tag, ScalarFn};
use crate::sign_map::{limit_profile, limit_value_level, settle_time};
use crate::slow_convergence::{build_initial, phi_from_tag, verify_lower_bound, SlowSpec};

/// What a command produced and whether its checks passed.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub passed: bool,
    /// Short human-readable lines for the terminal.
    pub summary: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { files: Vec::new(), passed: true, summary: Vec::new() }
    }
}

fn opts_for(norms: &[Norm], retention: Retention) -> EvolveOptions {
    EvolveOptions { norms: norms.to_vec(), retention }
}

/// `e_p(t)` at integer times `0..=2N`, one column per norm.
fn integer_energy_table(
    command: &str,
    seed: u64,
    norms: &[Norm],
    rows: impl Fn(usize, Norm) -> Result<f64>,
    t_max: usize,
) -> Result<Table> {
    let mut cols = vec!["t".to_string()];
    cols.extend(norms.iter().map(|p| p.column()));
    let mut table = Table::with_columns(command, seed, &cols);
    for t in 0..=t_max {
        let vals = norms.iter().map(|&p| rows(t, p)).collect::<Result<Vec<_>>>()?;
        table.row_indexed(t, &vals);
    }
    Ok(table)
}

fn profile_lines(traj: &Trajectory, seed: u64) -> Vec<ProfileLine> {
    (0..=traj.steps())
        .filter_map(|n| traj.profile(n).map(|g| (n, g)))
        .map(|(n, g)| ProfileLine { n, seed, breakpoints: g.breakpoints().to_vec(), values: g.values().to_vec() })
        .collect()
}

pub fn cmd_simulate(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::new();
    let norms = cfg.norm_list()?;
    let map = cfg.map()?;
    let g0 = cfg.initial_profile()?;
    let opts = opts_for(&norms, Retention::All);
    let traj = match &cfg.disturbance {
        Some(d) => {
            evolve_disturbed(&g0, &map, &Disturbance::from_tag(&d.tag, d.cells)?, cfg.horizon, cfg.policy, &opts)?
        }
        None => evolve_with(&g0, &map, cfg.horizon, cfg.policy, &opts)?,
    };
    let t_max = 2 * traj.steps();
    let table =
        integer_energy_table("simulate", cfg.seed, &norms, |t, p| Ok(traj.energy_at_time(t as f64, p)?.value), t_max)?;
    o.files.push(table.save(out, "energies.csv")?);
    if !cfg.times.is_empty() {
        let mut cols = vec!["t".to_string()];
        cols.extend(norms.iter().map(|p| p.column()));
        let mut grid = Table::with_columns("simulate", cfg.seed, &cols);
        for &t in &cfg.times {
            let mut row = vec![t];
            for &p in &norms {
                row.push(traj.energy_at_time(t, p)?.value);
            }
            grid.row(&row);
        }
        o.files.push(grid.save(out, "energies_grid.csv")?);
    }
    o.files.push(save_ndjson(out, "profiles.ndjson", &profile_lines(&traj, cfg.seed))?);

    let mut summary = BTreeMap::<String, Value>::new();
    summary.insert("schema".into(), json!(super::SCHEMA));
    summary.insert("seed".into(), json!(cfg.seed));
    summary.insert("map".into(), json!(map.label()));
    summary.insert("steps".into(), json!(traj.steps()));
    summary.insert("policy".into(), json!(cfg.policy));
    summary.insert("dominated".into(), json!(traj.is_dominated()));
    let mut ges = BTreeMap::new();
    for &p in &norms {
        if let Ok(r) = ges_check(&traj, p) {
            if r.mu < 1.0 {
                o.summary.push(format!(
                    "exponential fit p={p}: lambda={:.6} C_fit={:.6} (C_theory={:.6})",
                    r.lambda, r.c_fit, r.c_theory
                ));
            }
            ges.insert(p.to_string(), r);
        }
    }
    summary.insert("exponential_fit".into(), json!(ges));
    if matches!(cfg.map, Some(MapSpec::Sign { .. })) {
        summary.insert("settle_time".into(), json!(settle_time(&g0)));
    }
    if let Some(tag) = &cfg.rate_law {
        let q = RateLaw::from_tag(tag)?;
        let mut bounds = BTreeMap::new();
        for &p in &norms {
            match check_decay_bounds(&traj, &q, BoundMode::Upper, p) {
                Ok(r) => {
                    o.passed &= r.holds;
                    bounds.insert(p.to_string(), json!(r));
                }
                Err(e) => {
                    bounds.insert(p.to_string(), json!({ "error": e.to_string() }));
                }
            }
        }
        summary.insert("decay_bounds".into(), json!(bounds));
    }
    o.files.push(save_json(out, "summary.json", &summary)?);
    Ok(o)
}

/// Steps at which the scalar comparison is tabulated: every step up to 100,
/// then a geometric grid up to the horizon.
fn comparison_steps(horizon: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..=horizon.min(100)).collect();
    if horizon > 100 {
        let mut extra: Vec<usize> =
            log_grid_desc(horizon as f64, 100.0, 60).into_iter().map(|x| x.round() as usize).collect();
        extra.sort_unstable();
        v.extend(extra.into_iter().filter(|&n| n > 100));
        v.dedup();
    }
    v
}

/// `phi` tags for the counterexample: `log:a` is `ln(a + x)`.
fn counterexample_phi(tag: &str) -> Result<ScalarFn> {
    let (head, a) = split_tag(tag)?;
    match (head, a.as_slice()) {
        ("log", [c]) if *c >= 1.0 => {
            let c = *c;
            Ok(ScalarFn::closed(tag, move |x| (c + x).ln()))
        }
        _ => Err(Error::UnknownTag(tag.to_string())),
    }
}

pub fn cmd_decay(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::new();
    let tag = cfg.rate_law.as_deref().ok_or_else(|| missing("rate_law"))?;
    let q = RateLaw::from_tag(tag)?;
    let x0 = cfg.decay.x0.unwrap_or(0.1);
    let n = cfg.horizon;
    let regime = classify_regime(&q)?;
    let it = iterate_q(&q, x0, n)?;
    let mut report = BTreeMap::<String, Value>::new();
    report.insert("schema".into(), json!(super::SCHEMA));
    report.insert("seed".into(), json!(cfg.seed));
    report.insert("rate_law".into(), json!(tag));
    report.insert("x0".into(), json!(x0));
    report.insert("horizon".into(), json!(n));
    report.insert("regime".into(), json!(regime.name()));

    let steps = comparison_steps(n);
    let prediction: Box<dyn Fn(usize) -> Result<f64>> = match &regime {
        Regime::QPrimeBetween { q_prime, .. } => {
            let lambda = lambda_rate(&q)?;
            let psi = psi_sum_check(&q, lambda, 200)?;
            let scaled: Vec<f64> = (n.min(100)..=n).map(|k| (lambda * k as f64 - it.neg_log[k]).exp()).collect();
            let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            let rate = -it.neg_log[n] / n.max(1) as f64;
            o.summary.push(format!("lambda = {lambda:.12} (q'(0) = {q_prime}); ln Q^n/n = {rate:.12}"));
            o.passed &= psi.converged;
            report.insert("lambda".into(), json!(lambda));
            report.insert("log_rate_at_horizon".into(), json!(rate));
            report.insert("scaled_range".into(), json!([lo, hi]));
            report.insert("psi_sum".into(), json!(psi));
            Box::new(move |k| Ok(x0 * (-lambda * k as f64).exp()))
        }
        Regime::QPrimeZero => {
            let (head, a) = split_tag(tag)?;
            if let ("logpow", [p]) = (head, a.as_slice()) {
                let p = *p;
                let fit = logpow_prediction(p, x0, n)?;
                o.summary.push(format!("alpha_0 = {} (fitted {:.6})", fit.prediction, fit.fitted_constant));
                let (a0, e) = (fit.prediction, 1.0 / (p + 1.0));
                report.insert("leading_order".into(), json!(fit));
                Box::new(move |k| Ok((-a0 * (k as f64).powf(e)).exp() / SQRT_2))
            } else {
                let equiv = check_equiv_condition(&q, x0, 200)?;
                o.passed &= equiv.satisfied;
                o.summary.push(format!("equivalence bound C = {:.6} (satisfied: {})", equiv.bound, equiv.satisfied));
                report.insert("equivalence".into(), json!(equiv));
                let q2 = q.clone();
                Box::new(move |k| if k == 0 { Ok(x0) } else { decay::F_inverse(&q2, x0, k as f64) })
            }
        }
        Regime::QPrimeOne { .. } => {
            let params = superexp_params(&q, (x0 * 1e-3, x0), x0, n)?;
            let violation = params.first_violation(&it);
            o.passed &= violation.is_none();
            o.summary.push(format!(
                "double-exponential bound: alpha = {:.6}, mu* = {:.6}, first violation {:?}",
                params.alpha, params.mu_star, violation
            ));
            report.insert("superexp".into(), json!(params));
            report.insert("first_violation".into(), json!(violation));
            Box::new(move |k| Ok((-params.bound_neg_log(k)).exp()))
        }
    };
    let mut table = Table::new("decay", cfg.seed, &["n", "x_n", "neg_log_x_n", "prediction"]);
    for &k in &steps {
        table.row_indexed(k, &[it.values[k], it.neg_log[k], prediction(k)?]);
    }
    o.files.push(table.save(out, "comparison.csv")?);

    if let Some(phi_tag) = &cfg.decay.counterexample {
        let phi = counterexample_phi(phi_tag)?;
        let c = construct_superexp_counterexample(&phi, x0, n)?;
        let mut t = Table::new("decay", cfg.seed, &["n", "y", "neg_log", "margin", "recursion_residual"]);
        for r in &c.rows {
            t.row_indexed(r.n, &[r.y, r.neg_log, r.margin, r.recursion_residual]);
        }
        o.files.push(t.save(out, "counterexample.csv")?);
        o.passed &= c.bounded_below && c.max_residual <= 1e-8;
        o.summary.push(format!("counterexample floor = {:.6}, tail slope = {:.3e}", c.floor, c.tail_slope));
        report.insert("counterexample".into(), json!(c));
    }
    o.files.push(save_json(out, "report.json", &report)?);
    Ok(o)
}

pub fn cmd_hypotheses(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::new();
    let spec = cfg.map.as_ref().ok_or_else(|| missing("map"))?;
    let rel = spec.relation()?;
    let q = cfg.rate_law.as_deref().map(RateLaw::from_tag).transpose()?;
    let h = &cfg.hypotheses;
    let grid =
        SampleGrid { extent: h.extent, half: h.samples, sector_radius: h.sector_radius, ..SampleGrid::default() };
    let rep = check_hypotheses(&rel, &grid, q.as_ref());
    for e in &rep.entries {
        if let Some((x, y)) = e.status.witness() {
            o.summary.push(format!("{}: violated at ({x}, {y})", e.name));
        }
    }
    let map = spec.build()?;
    let cg = ContractionGrid { step: h.r_max / 1000.0 };
    let mu = envelope_table(&map, 1, h.r_max, cg)?;
    let rho = envelope_table(&map, 2, h.r_max, cg)?;
    let mut table = Table::new("hypotheses", cfg.seed, &["r", "mu", "rho"]);
    for (a, b) in mu.iter().zip(&rho) {
        table.row(&[a.0, a.1, b.1]);
    }
    o.files.push(table.save(out, "envelope.csv")?);
    o.files.push(save_json(
        out,
        "report.json",
        &json!({ "schema": super::SCHEMA, "seed": cfg.seed, "hypotheses": rep }),
    )?);
    Ok(o)
}

pub fn cmd_slow(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::new();
    let sc = cfg.slow.as_ref().ok_or_else(|| missing("slow"))?;
    let spec = SlowSpec { phi: phi_from_tag(&sc.phi)?, p: sc.p, c: sc.c, k_max: sc.k_max };
    let prof = build_initial(&spec)?;
    let map = match &cfg.map {
        Some(m) => m.build()?,
        None => crate::damping_maps::RotatedMap::saturation_band(sc.c)?,
    };
    let p = Norm::new(sc.p)?;
    let n = cfg.horizon.min(prof.horizon);
    let traj = evolve_with(&prof.profile, &map, n, cfg.policy, &opts_for(&[p], Retention::Ends))?;
    let rep = verify_lower_bound(&traj, &spec, prof.horizon)?;
    let mut table = Table::with_columns("slow", cfg.seed, &["n".into(), p.column(), "phi_2n_minus_2".into()]);
    for r in &rep.rows {
        table.row_indexed(r.n, &[r.norm, r.bound]);
    }
    o.files.push(table.save(out, "comparison.csv")?);
    o.passed = rep.holds && rep.map_in_region;
    if !rep.map_in_region {
        o.summary.push("the map leaves the region |x| - c <= |y| <= |x|".into());
    }
    if let Some(k) = rep.first_violation {
        o.summary.push(format!("lower bound fails at n = {k}"));
    }
    o.files.push(save_json(
        out,
        "report.json",
        &json!({ "schema": super::SCHEMA, "seed": cfg.seed, "profile": prof, "report": rep }),
    )?);
    Ok(o)
}

pub fn cmd_sign(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::new();
    let level = match &cfg.map {
        None => None,
        Some(MapSpec::Sign { level }) => *level,
        Some(_) => return Err(Error::Io("the sign command needs a map of kind \"sign\"".into())),
    };
    let map = MapSpec::Sign { level }.build()?;
    let norms = cfg.norm_list()?;
    let g0 = cfg.initial_profile()?;
    let traj = evolve_with(&g0, &map, cfg.horizon, cfg.policy, &opts_for(&norms, Retention::All))?;
    // Closed forms are stated at level sqrt2; other levels are rescaled.
    let m = level.unwrap_or(SQRT_2);
    let scaled = g0.map_values(|v| crate::sign_map::to_normalized(v, m));
    let limit = if level.is_none() { limit_profile(&g0) } else { g0.map_values(|v| limit_value_level(v, m)) };
    let settle = settle_time(&scaled);
    let first = (settle / 2.0).ceil() as usize;
    let mismatch = (first..=traj.steps()).find(|&k| traj.profile(k).as_ref() != Some(&limit));
    o.passed = mismatch.is_none();
    let table = integer_energy_table(
        "sign",
        cfg.seed,
        &norms,
        |t, p| Ok(traj.energy_at_time(t as f64, p)?.value),
        2 * traj.steps(),
    )?;
    o.files.push(table.save(out, "energies.csv")?);
    let line = ProfileLine {
        n: usize::MAX,
        seed: cfg.seed,
        breakpoints: limit.breakpoints().to_vec(),
        values: limit.values().to_vec(),
    };
    o.files.push(save_ndjson(out, "limit.ndjson", &[line])?);
    o.summary.push(format!("settle time T = {settle}; limit reached from step {first}: {}", mismatch.is_none()));
    o.files.push(save_json(
        out,
        "report.json",
        &json!({
            "schema": super::SCHEMA, "seed": cfg.seed, "settle_time": settle, "settled_from_step": first,
            "matches_limit": mismatch.is_none(), "first_mismatch": mismatch,
        }),
    )?);
    Ok(o)
}

#[derive(Serialize)]
struct RejectionSection {
    applicable: bool,
    certified: bool,
    detail: Value,
}

pub fn cmd_iss(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::new();
    let map = cfg.map()?;
    let p: Norm = cfg.iss.p.parse()?;
    let g0 = cfg.initial_profile()?;
    let d = match &cfg.disturbance {
        Some(s) => Disturbance::from_tag(&s.tag, s.cells)?,
        None => Disturbance::zero(),
    };
    let mut scenarios = vec![(g0.clone(), d.clone())];
    let mut rng = Pcg64::seed_from_u64(cfg.seed);
    let amp = cfg.iss.amplitude;
    for _ in 0..cfg.iss.random_scenarios {
        let cells = rng.gen_range(1..=16);
        let g = random_profile(&mut rng, cells, amp);
        let (d1, d2) = (rng.gen_range(-amp..=amp) / 4.0, rng.gen_range(-amp..=amp) / 4.0);
        scenarios.push((g, Disturbance::from_tag(&format!("const:{d1}:{d2}"), 1)?));
    }
    let n = cfg.horizon;
    let inputs: f64 = scenarios
        .iter()
        .flat_map(|(_, d)| reduce_disturbance(d, n).into_iter().map(|w| w.norm(Norm::Inf)))
        .fold(0.0, f64::max);
    let sup0 = scenarios.iter().map(|(g, _)| g.norm(Norm::Inf)).fold(0.0, f64::max);
    let r_max = 2.0 * (sup0 + 2.0 * inputs + 1.0);
    let samples = map_gain_samples(&map, r_max, r_max / 4000.0)?;
    let phi = kinfty_minorant(&samples, cfg.iss.range_limit)?;
    let report = iss_check(&map, &scenarios, n, p, cfg.policy, &phi)?;
    o.passed &= report.holds();

    let traj = evolve_disturbed(&g0, &map, &d, n, cfg.policy, &opts_for(&[p], Retention::Ends))?;
    let e = traj.energies(p).expect("requested norm");
    let u: Vec<f64> = reduce_disturbance(&d, n.saturating_sub(1)).iter().take(n).map(|w| 2.0 * w.norm(p)).collect();
    let k = crate::disturbance_iss::comparison_system(e[0], &u, &phi, p);
    let mut table = Table::with_columns("iss", cfg.seed, &["n".into(), p.column(), "k_n".into()]);
    for i in 0..=n {
        table.row_indexed(i, &[e[i], k[i]]);
    }
    o.files.push(table.save(out, "decay.csv")?);

    let applicable = !matches!(d.decay(), DecayTag::Constant { .. } | DecayTag::Unknown);
    let rejection = if applicable {
        match verify_perturbation_rejection(&traj, &d, p) {
            Ok(r) => {
                if r.reduces_to_strong_stability {
                    o.summary.push("rejection: reduces to strong stability".into());
                }
                RejectionSection { applicable, certified: true, detail: json!(r) }
            }
            Err(e) => {
                o.passed = false;
                o.summary.push(format!("rejection not certified: {e}"));
                RejectionSection { applicable, certified: false, detail: json!(e.to_string()) }
            }
        }
    } else {
        RejectionSection { applicable, certified: false, detail: json!("disturbance does not vanish") }
    };
    o.summary.push(format!(
        "ISS: {} violations, {} dominance violations, {} limsup violations over {} scenarios",
        report.violations.len(),
        report.dominance_violations.len(),
        report.limsup_violations.len(),
        scenarios.len()
    ));
    o.files.push(save_json(
        out,
        "iss.json",
        &json!({ "schema": super::SCHEMA, "seed": cfg.seed, "iss": report, "rejection": rejection }),
    )?);
    Ok(o)
}

pub fn cmd_two_boundary(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::new();
    let tb = cfg.two_boundary.as_ref().ok_or_else(|| missing("two_boundary"))?;
    let right = cfg.map()?;
    let left = tb.left.build()?;
    let norms = cfg.norm_list()?;
    let g = cfg.initial_profile()?;
    let (h0, g0) = split_for_two_boundary(&g)?;
    let tr = evolve_two_boundary(&h0, &g0, &left, &right, 2 * cfg.horizon, cfg.policy, &norms)?;
    let table = integer_energy_table(
        "two-boundary",
        cfg.seed,
        &norms,
        |t, p| Ok(tr.energies(p).expect("requested norm")[t]),
        2 * cfg.horizon,
    )?;
    o.files.push(table.save(out, "energies.csv")?);
    let mut report = json!({ "schema": super::SCHEMA, "seed": cfg.seed, "left": left.label(), "right": right.label() });
    if matches!(tb.left, MapSpec::Scale { factor } if factor == 1.0) {
        let single = evolve_with(&g, &right, cfg.horizon, cfg.policy, &opts_for(&norms, Retention::All))?;
        let mut worst = 0.0f64;
        for &p in &norms {
            for t in 0..=2 * cfg.horizon {
                let a = single.energy_at_time(t as f64, p)?.value;
                let b = tr.energies(p).expect("requested norm")[t];
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        o.passed = worst <= 1e-12;
        o.summary.push(format!("largest relative gap to the single-boundary run: {worst:.3e}"));
        report["single_boundary_gap"] = json!(worst);
    }
    o.files.push(save_json(out, "report.json", &report)?);
    Ok(o)
}

/// Reloads every line of a `profiles.ndjson` file.
pub fn read_profiles(path: &Path) -> Result<Vec<SimpleProfile>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let p: ProfileLine = serde_json::from_str(l).map_err(|e| Error::Io(e.to_string()))?;
            SimpleProfile::new(p.breakpoints, p.values)
        })
        .collect()
}
