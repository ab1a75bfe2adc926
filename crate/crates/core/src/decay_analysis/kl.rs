use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples of a function `f(x, t)` at `x = 2^k`, `k_min <= k <= k_max`, and
/// integer `t = 0..=T`. `values[j][n]` is `f(2^{k_min + j}, n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlSamples {
    pub k_min: i32,
    pub values: Vec<Vec<f64>>,
}

impl KlSamples {
    pub fn from_fn(k_min: i32, k_max: i32, t_max: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (k_min..=k_max).map(|k| (0..=t_max).map(|n| f(2f64.powi(k), n as f64)).collect()).collect();
        Self { k_min, values }
    }
}

/// A class-KL majorant of the sampled function.
#[derive(Clone, Debug)]
pub struct KlEnvelope {
    samples: KlSamples,
}

/// Validates monotonicity of the samples and wraps them as an envelope.
pub fn kl_envelope(samples: KlSamples) -> Result<KlEnvelope> {
    let rows = &samples.values;
    if rows.is_empty() || rows[0].is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::MonotonicityViolation("sample table must be a nonempty rectangle".into()));
    }
    for (j, row) in rows.iter().enumerate() {
        if let Some(n) = row.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::MonotonicityViolation(format!("row {j} increases in t at t = {}", n + 1)));
        }
        if row.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::MonotonicityViolation(format!("row {j} has a negative or NaN value")));
        }
    }
    for j in 1..rows.len() {
        if let Some(n) = (0..rows[j].len()).find(|&n| rows[j][n] < rows[j - 1][n]) {
            return Err(Error::MonotonicityViolation(format!("column t = {n} decreases in x at row {j}")));
        }
    }
    Ok(KlEnvelope { samples })
}

impl KlEnvelope {
    fn t_max(&self) -> usize {
        self.samples.values[0].len() - 1
    }

    fn k_max(&self) -> i32 {
        self.samples.k_min + self.samples.values.len() as i32 - 1
    }

    /// Row `k` interpolated in `t`, shifted one unit to the right.
    fn row_in_t(&self, k: i32, t: f64) -> f64 {
        let j = (k.clamp(self.samples.k_min, self.k_max()) - self.samples.k_min) as usize;
        let row = &self.samples.values[j];
        if t <= 1.0 {
            return row[0];
        }
        let n = t.floor() as usize;
        let last = self.t_max();
        if n > last {
            return row[last];
        }
        let a = (n + 1) as f64 - t;
        a * row[n - 1] + (1.0 - a) * row[n.min(last)]
    }

    /// The interpolated part without the strictifying term.
    fn beta1(&self, x: f64, t: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let floor_x = 2f64.powi(self.samples.k_min - 1);
        if x < floor_x {
            return x / floor_x * self.beta1(floor_x, t);
        }
        let k = x.log2().ceil() as i32;
        let top = 2f64.powi(k);
        let w = (top - x) / (0.5 * top);
        w * self.row_in_t(k, t) + (1.0 - w) * self.row_in_t(k + 1, t)
    }

    /// `beta(x, t) = beta1(x, t) + x e^{-t}`.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        self.beta1(x, t) + x * (-t).exp()
    }

    /// Largest `x` for which the envelope is certified above the samples.
    pub fn certified_x_max(&self) -> f64 {
        2f64.powi(self.k_max() - 1)
    }
}
