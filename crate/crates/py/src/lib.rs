//! Python bindings for `wavedamp`.
//!
//! Profiles cross the boundary as a pair of float lists (breakpoints and
//! cell values); maps and policies use the same JSON objects as the scenario
//! config files.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use wavedamp::cli::{run_command, Command, MapSpec, ScenarioConfig};
use wavedamp::{evolve, Norm, RateLaw, SelectionPolicy, SimpleProfile};

fn to_py(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_command(name: &str) -> PyResult<Command> {
    Ok(match name {
        "simulate" => Command::Simulate,
        "decay" => Command::Decay,
        "hypotheses" => Command::Hypotheses,
        "slow" => Command::Slow,
        "sign" => Command::Sign,
        "iss" => Command::Iss,
        "two-boundary" => Command::TwoBoundary,
        other => return Err(PyValueError::new_err(format!("unknown command '{other}'"))),
    })
}

/// Runs a CLI command from a config JSON string.
///
/// Returns `(passed, files, summary_lines)`.
#[pyfunction]
fn run(command: &str, config_json: &str, out_dir: &str) -> PyResult<(bool, Vec<String>, Vec<String>)> {
    let cmd = parse_command(command)?;
    let cfg = ScenarioConfig::parse(config_json).map_err(to_py)?;
    cfg.validate().map_err(to_py)?;
    let outcome = run_command(cmd, &cfg, Path::new(out_dir)).map_err(to_py)?;
    let files = outcome.files.iter().map(|p| p.display().to_string()).collect();
    Ok((outcome.passed, files, outcome.summary))
}

/// `|g_n|_p` for `n = 0..=steps` under the map described by `map_json`.
#[pyfunction]
#[pyo3(signature = (breakpoints, values, map_json, steps, p = "2", policy_json = None))]
fn evolve_norms(
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    map_json: &str,
    steps: usize,
    p: &str,
    policy_json: Option<&str>,
) -> PyResult<Vec<f64>> {
    let g0 = SimpleProfile::new(breakpoints, values).map_err(to_py)?;
    let spec: MapSpec = serde_json::from_str(map_json).map_err(to_py)?;
    let map = spec.build().map_err(to_py)?;
    let policy: SelectionPolicy = match policy_json {
        Some(s) => serde_json::from_str(s).map_err(to_py)?,
        None => SelectionPolicy::MinAbs,
    };
    let norm: Norm = p.parse().map_err(to_py)?;
    let traj = evolve(&g0, &map, steps, policy).map_err(to_py)?;
    (0..=steps).map(|n| traj.energy_step(n, norm).map_err(to_py)).collect()
}

/// The `n`-th iterate of the rotated sign map from `x`, in closed form.
#[pyfunction]
fn sign_iterate(x: f64, n: u64) -> f64 {
    wavedamp::sign_map::sign_iterate_closed(x, n)
}

/// Iterates of the scalar rate map named by `tag` from `x0`.
///
/// Returns `(values, neg_log)`; `neg_log` stays exact where `values`
/// underflows.
#[pyfunction]
fn rate_law_iterates(tag: &str, x0: f64, n: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let law = RateLaw::from_tag(tag).map_err(to_py)?;
    let it = law.iterate(x0, n).map_err(to_py)?;
    Ok((it.values, it.neg_log))
}

#[pymodule]
fn pywavedamp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_norms, m)?)?;
    m.add_function(wrap_pyfunction!(sign_iterate, m)?)?;
    m.add_function(wrap_pyfunction!(rate_law_iterates, m)?)?;
    m.add("SCHEMA", wavedamp::cli::SCHEMA)?;
    Ok(())
}
