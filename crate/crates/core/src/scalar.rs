//! Real functions of one variable: exact piecewise-linear tables and tagged
//! closed forms.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// A continuous piecewise-linear function with linear extension beyond the
/// first and last knot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

/// One affine piece of a [`PiecewiseLinear`]: `y = y0 + slope * (x - x0)` on `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub x0: f64,
    pub y0: f64,
    pub slope: f64,
}

impl PiecewiseLinear {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, left_slope: f64, right_slope: f64) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidRelation("knot arrays empty or of unequal length".into()));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidRelation("knots must be strictly increasing".into()));
        }
        if xs.iter().chain(&ys).chain([&left_slope, &right_slope]).any(|v| !v.is_finite()) {
            return Err(Error::InvalidRelation("knots and slopes must be finite".into()));
        }
        Ok(Self { xs, ys, left_slope, right_slope })
    }

    /// The linear map `x -> slope * x`.
    pub fn linear(slope: f64) -> Self {
        Self { xs: vec![0.0], ys: vec![0.0], left_slope: slope, right_slope: slope }
    }

    /// Loads a two-column `x,y` CSV (header optional). The end slopes continue
    /// the first and last segments.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
            let (Some(a), Some(b)) = (rec.get(0), rec.get(1)) else { continue };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if xs.is_empty() => continue, // header row
                _ => return Err(Error::Io(format!("{}: malformed row {a},{b}", path.display()))),
            }
        }
        if xs.len() < 2 {
            return Err(Error::InvalidRelation(format!("{}: need at least two rows", path.display())));
        }
        let n = xs.len();
        let ls = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        let rs = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
        Self::new(xs, ys, ls, rs)
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn end_slopes(&self) -> (f64, f64) {
        (self.left_slope, self.right_slope)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.left_slope * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.right_slope * (x - self.xs[n - 1]);
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + t * (self.ys[i + 1] - self.ys[i])
    }

    /// Right derivative.
    pub fn slope_at(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            return self.left_slope;
        }
        if x >= self.xs[n - 1] {
            return self.right_slope;
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }

    /// All affine pieces from left to right, the outer two unbounded.
    pub fn pieces(&self) -> Vec<Piece> {
        let n = self.xs.len();
        let mut out = Vec::with_capacity(n + 1);
        out.push(Piece {
            lo: f64::NEG_INFINITY,
            hi: self.xs[0],
            x0: self.xs[0],
            y0: self.ys[0],
            slope: self.left_slope,
        });
        for i in 0..n - 1 {
            out.push(Piece {
                lo: self.xs[i],
                hi: self.xs[i + 1],
                x0: self.xs[i],
                y0: self.ys[i],
                slope: (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i]),
            });
        }
        out.push(Piece {
            lo: self.xs[n - 1],
            hi: f64::INFINITY,
            x0: self.xs[n - 1],
            y0: self.ys[n - 1],
            slope: self.right_slope,
        });
        out
    }

    /// `c * self`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| c * y).collect(),
            left_slope: c * self.left_slope,
            right_slope: c * self.right_slope,
        }
    }
}

type Func = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Repr {
    Table(PiecewiseLinear),
    Closed { f: Func, df: Option<Func> },
}

/// A named real function. Piecewise-linear functions keep their table so that
/// downstream code can treat them exactly.
#[derive(Clone)]
pub struct ScalarFn {
    name: String,
    repr: Repr,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn").field("name", &self.name).finish()
    }
}

impl ScalarFn {
    pub fn table(name: impl Into<String>, pl: PiecewiseLinear) -> Self {
        Self { name: name.into(), repr: Repr::Table(pl) }
    }

    pub fn closed<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), repr: Repr::Closed { f: Arc::new(f), df: None } }
    }

    pub fn closed_with_derivative<F, D>(name: impl Into<String>, f: F, df: D) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), repr: Repr::Closed { f: Arc::new(f), df: Some(Arc::new(df)) } }
    }

    pub fn linear(slope: f64) -> Self {
        Self::table(format!("linear:{slope}"), PiecewiseLinear::linear(slope))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn as_table(&self) -> Option<&PiecewiseLinear> {
        match &self.repr {
            Repr::Table(pl) => Some(pl),
            Repr::Closed { .. } => None,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Table(pl) => pl.eval(x),
            Repr::Closed { f, .. } => f(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Table(pl) => pl.slope_at(x),
            Repr::Closed { df: Some(d), .. } => d(x),
            Repr::Closed { f, df: None } => numeric::derivative(|t| f(t), x, 1e-6),
        }
    }

    /// Parses a boundary-function tag such as `saturation:1` or `linear:3`.
    ///
    /// Accepted tags: `zero`, `identity`, `linear:a`, `min0`, `saturation:L`,
    /// `half-saturation:L`, `cubic:a` (x + a x^3), `tanh:a` (a tanh x),
    /// `table:PATH` (two-column CSV).
    pub fn from_tag(tag: &str) -> Result<Self> {
        let (head, args) = split_tag(tag)?;
        let arg = |i: usize| -> Result<f64> { args.get(i).copied().ok_or_else(|| Error::UnknownTag(tag.to_string())) };
        let pl = |xs: Vec<f64>, ys: Vec<f64>, l: f64, r: f64| -> Result<Self> {
            Ok(Self::table(tag, PiecewiseLinear::new(xs, ys, l, r)?))
        };
        match head {
            "zero" => pl(vec![0.0], vec![0.0], 0.0, 0.0),
            "identity" => pl(vec![0.0], vec![0.0], 1.0, 1.0),
            "linear" => pl(vec![0.0], vec![0.0], arg(0)?, arg(0)?),
            "min0" => pl(vec![0.0], vec![0.0], 1.0, 0.0),
            "saturation" => {
                let l = positive(arg(0)?, tag)?;
                pl(vec![-l, l], vec![-l, l], 0.0, 0.0)
            }
            "half-saturation" => {
                let l = positive(arg(0)?, tag)?;
                pl(vec![-l, l], vec![-0.5 * l, 0.5 * l], 0.0, 0.0)
            }
            "cubic" => {
                let a = arg(0)?;
                Ok(Self::closed_with_derivative(tag, move |x| x + a * x * x * x, move |x| 1.0 + 3.0 * a * x * x))
            }
            "tanh" => {
                let a = arg(0)?;
                Ok(Self::closed_with_derivative(tag, move |x| a * x.tanh(), move |x| a / x.cosh().powi(2)))
            }
            "table" => {
                let path = tag.split_once(':').map(|(_, p)| p).unwrap_or_default();
                Ok(Self::table(tag, PiecewiseLinear::from_csv(Path::new(path))?))
            }
            _ => Err(Error::UnknownTag(tag.to_string())),
        }
    }
}

fn positive(v: f64, tag: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::UnknownTag(tag.to_string()))
    }
}

/// Splits `head:a:b:c` into the head and its numeric arguments. Tags whose
/// argument is a path (`table:...`, `custom-table:...`) return no numbers.
pub fn split_tag(tag: &str) -> Result<(&str, Vec<f64>)> {
    let mut it = tag.split(':');
    let head = it.next().unwrap_or_default().trim();
    if head.ends_with("table") {
        return Ok((head, Vec::new()));
    }
    let args = it
        .map(|a| a.trim().parse::<f64>().map_err(|_| Error::UnknownTag(tag.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok((head, args))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_eval_and_extension() {
        let s = ScalarFn::from_tag("saturation:1").unwrap();
        assert_eq!(s.eval(0.5), 0.5);
        assert_eq!(s.eval(3.0), 1.0);
        assert_eq!(s.eval(-7.0), -1.0);
        assert_eq!(s.derivative(2.0), 0.0);
    }

    #[test]
    fn min0_and_linear() {
        let m = ScalarFn::from_tag("min0").unwrap();
        assert_eq!(m.eval(1.0), 0.0);
        assert_eq!(m.eval(-2.0), -2.0);
        assert_eq!(ScalarFn::from_tag("linear:3").unwrap().eval(2.0), 6.0);
    }

    #[test]
    fn closed_derivative() {
        let c = ScalarFn::from_tag("cubic:1").unwrap();
        assert_eq!(c.derivative(1.0), 4.0);
        let t = ScalarFn::closed("sq", |x| x * x);
        assert!((t.derivative(3.0) - 6.0).abs() < 1e-8);
    }

    #[test]
    fn bad_tags_rejected() {
        assert!(ScalarFn::from_tag("nope").is_err());
        assert!(ScalarFn::from_tag("linear:abc").is_err());
        assert!(ScalarFn::from_tag("saturation:-1").is_err());
    }

    #[test]
    fn pieces_cover_line() {
        let pl = PiecewiseLinear::new(vec![-1.0, 1.0], vec![-1.0, 1.0], 0.0, 0.0).unwrap();
        let p = pl.pieces();
        assert_eq!(p.len(), 3);
        assert_eq!(p[1].slope, 1.0);
    }
}
