//! Upper envelopes `sup_{|x| <= r} |S^[n](x)|` sampled on a grid.

use serde::{Deserialize, Serialize};

use super::RotatedMap;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionGrid {
    /// Sample spacing; also the outward extension used for the limit from above.
    pub step: f64,
}

impl Default for ContractionGrid {
    fn default() -> Self {
        Self { step: 1e-3 }
    }
}

/// Largest `|z|` over every branch path of length `n` starting at `x`.
fn max_abs_path(s: &RotatedMap, x: f64, n: usize) -> Result<f64> {
    let mut frontier = vec![x];
    for _ in 0..n {
        let mut next = Vec::with_capacity(frontier.len());
        for &y in &frontier {
            next.extend(s.eval(y)?);
        }
        next.sort_by(|a, b| a.total_cmp(b));
        next.dedup();
        frontier = next;
    }
    Ok(frontier.iter().fold(0.0f64, |m, z| m.max(z.abs())))
}

/// Grid estimate of `sup_{|x| <= r + step} |S^[n](x)|`; `r = 0` samples the
/// origin only.
pub fn rho_n(s: &RotatedMap, n: usize, r: f64, grid: ContractionGrid) -> Result<f64> {
    if r <= 0.0 {
        return max_abs_path(s, 0.0, n);
    }
    let reach = r + grid.step;
    let k = (reach / grid.step).ceil() as i64;
    let mut best = 0.0f64;
    for i in -k..=k {
        let x = reach * i as f64 / k as f64;
        best = best.max(max_abs_path(s, x, n)?);
    }
    for x in [r, -r] {
        best = best.max(max_abs_path(s, x, n)?);
    }
    Ok(best)
}

/// Envelope of the second iterate.
pub fn rho(s: &RotatedMap, r: f64, grid: ContractionGrid) -> Result<f64> {
    rho_n(s, 2, r, grid)
}

/// Envelope of one application.
pub fn mu(s: &RotatedMap, r: f64, grid: ContractionGrid) -> Result<f64> {
    rho_n(s, 1, r, grid)
}

/// Table `(r_k, sup_{|x| <= r_k + step} |S^[n](x)|)` for `r_k = k step`,
/// `0 <= r_k <= r_max`, computed with a single sweep. The first row is exact at
/// the origin.
pub fn envelope_table(s: &RotatedMap, n: usize, r_max: f64, grid: ContractionGrid) -> Result<Vec<(f64, f64)>> {
    let h = grid.step;
    let k_max = (r_max / h).ceil() as usize;
    // m[j] = max over x = +-(j h) of the path maximum.
    let mut m = Vec::with_capacity(k_max + 2);
    for j in 0..=k_max + 1 {
        let x = j as f64 * h;
        m.push(max_abs_path(s, x, n)?.max(max_abs_path(s, -x, n)?));
    }
    let mut out = Vec::with_capacity(k_max + 1);
    out.push((0.0, m[0]));
    let mut run = m[0].max(m[1]);
    for k in 1..=k_max {
        run = run.max(m[k + 1]);
        out.push((k as f64 * h, run));
    }
    Ok(out)
}
