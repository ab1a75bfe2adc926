//! Rate laws `q` bounding the boundary damping, and the induced iteration
//! bound `Q(x) = (2 (q + id)^{-1}(sqrt2 x) - sqrt2 x) / sqrt2`.
//!
//! Closed-form laws also expose `ln(q(s)/s)` and `ln(1 - q(s)/s)` as functions
//! of `ln s`, which lets [`RateLaw::log_q_ratio`] follow iterates far below the
//! smallest positive double.

use std::f64::consts::LN_2;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{self, SQRT_2};
use crate::scalar::{split_tag, PiecewiseLinear, ScalarFn};

const LN_SQRT2: f64 = 0.5 * LN_2;

/// Below this value iterates are tracked through `-ln x` only.
pub const PLAIN_FLOOR: f64 = 1e-280;

/// `ln(Q(x)/x)` as a function of `ln x`.
pub type LogRatioFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum RateKind {
    /// `q(s) = c s`, `0 < c < 1`.
    Linear { c: f64 },
    /// `q(s) = s^alpha`, `alpha > 1`.
    Power { alpha: f64 },
    /// `q(s) = s / (-ln s)^p`.
    LogPow { p: f64 },
    /// `q(s) = c s + s^2`.
    LinQuad { c: f64 },
    /// `q(s) = s - s^(1 + alpha)`.
    SuperExp { alpha: f64 },
    /// Tabulated or user-supplied `q`.
    Custom(ScalarFn),
    /// Only `Q` is known, through `ln(Q(x)/x)` as a function of `ln x`.
    Induced(LogRatioFn),
}

impl fmt::Debug for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateKind::Linear { c } => write!(f, "Linear({c})"),
            RateKind::Power { alpha } => write!(f, "Power({alpha})"),
            RateKind::LogPow { p } => write!(f, "LogPow({p})"),
            RateKind::LinQuad { c } => write!(f, "LinQuad({c})"),
            RateKind::SuperExp { alpha } => write!(f, "SuperExp({alpha})"),
            RateKind::Custom(s) => write!(f, "Custom({})", s.name()),
            RateKind::Induced(_) => write!(f, "Induced"),
        }
    }
}

/// A rate law `q` on `(0, radius]` together with its induced `Q`.
#[derive(Clone, Debug)]
pub struct RateLaw {
    kind: RateKind,
    radius: f64,
    tag: String,
}

/// Iterates of `Q` with their negative logarithms.
#[derive(Clone, Debug, Default)]
pub struct QIterates {
    /// `Q^[n](x0)`, clamped below at `1e-300`.
    pub values: Vec<f64>,
    /// `-ln Q^[n](x0)`, exact even where `values` is clamped.
    pub neg_log: Vec<f64>,
    /// First index whose value had to be clamped.
    pub underflow_from: Option<usize>,
}

impl RateLaw {
    pub fn new(kind: RateKind, radius: f64, tag: impl Into<String>) -> Self {
        Self { kind, radius, tag: tag.into() }
    }

    pub fn linear(c: f64) -> Self {
        Self::new(RateKind::Linear { c }, f64::INFINITY, format!("linear:{c}"))
    }

    pub fn power(alpha: f64) -> Self {
        // |q'| = alpha s^(alpha-1) < 1 and q(s) < s.
        let r = alpha.powf(-1.0 / (alpha - 1.0)).min(1.0);
        Self::new(RateKind::Power { alpha }, 0.999 * r, format!("power:{alpha}"))
    }

    pub fn logpow(p: f64) -> Self {
        // Need L = -ln s with L^-p + p L^(-p-1) < 1 and L > 1.
        let g = |l: f64| l.powf(-p) + p * l.powf(-p - 1.0) - 1.0;
        let mut hi = 2.0;
        while g(hi) >= 0.0 {
            hi *= 2.0;
        }
        let l_star = numeric::bisect(g, 1.0, hi, 0.0).unwrap_or(hi).max(1.0);
        Self::new(RateKind::LogPow { p }, 0.999 * (-l_star).exp(), format!("logpow:{p}"))
    }

    pub fn linquad(c: f64) -> Self {
        Self::new(RateKind::LinQuad { c }, 0.999 * 0.5 * (1.0 - c), format!("linquad:{c}"))
    }

    pub fn superexp(alpha: f64) -> Self {
        let r = (2.0 / (1.0 + alpha)).min(1.0).powf(1.0 / alpha);
        Self::new(RateKind::SuperExp { alpha }, 0.999 * r, format!("superexp:{alpha}"))
    }

    pub fn custom(q: ScalarFn, radius: f64) -> Self {
        let tag = q.name().to_string();
        Self::new(RateKind::Custom(q), radius, tag)
    }

    pub fn induced(log_ratio: LogRatioFn, radius: f64, tag: impl Into<String>) -> Self {
        Self::new(RateKind::Induced(log_ratio), radius, tag)
    }

    /// Parses `linear:c`, `power:a`, `logpow:p`, `linquad:c`, `superexp:a` or
    /// `custom-table:PATH`.
    pub fn from_tag(tag: &str) -> Result<Self> {
        let (head, args) = split_tag(tag)?;
        let one = || -> Result<f64> {
            match args.as_slice() {
                [v] if v.is_finite() => Ok(*v),
                _ => Err(Error::UnknownTag(tag.to_string())),
            }
        };
        let law = match head {
            "linear" => {
                let c = one()?;
                if !(0.0..1.0).contains(&c) {
                    return Err(Error::UnknownTag(tag.into()));
                }
                Self::linear(c)
            }
            "power" => {
                let a = one()?;
                if a <= 1.0 {
                    return Err(Error::UnknownTag(tag.into()));
                }
                Self::power(a)
            }
            "logpow" => Self::logpow(positive(one()?, tag)?),
            "linquad" => {
                let c = one()?;
                if !(0.0..1.0).contains(&c) {
                    return Err(Error::UnknownTag(tag.into()));
                }
                Self::linquad(c)
            }
            "superexp" => Self::superexp(positive(one()?, tag)?),
            "custom-table" => {
                let path = tag.split_once(':').map(|(_, p)| p).unwrap_or_default();
                let pl = PiecewiseLinear::from_csv(Path::new(path))?;
                let (xs, _) = pl.knots();
                let radius = *xs.last().unwrap_or(&1.0);
                Self::custom(ScalarFn::table(tag, pl), radius)
            }
            _ => return Err(Error::UnknownTag(tag.to_string())),
        };
        Ok(law.with_tag(tag))
    }

    fn with_tag(mut self, tag: &str) -> Self {
        self.tag = tag.to_string();
        self
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    /// Radius `M` on which `0 < q(s) < s` and `|q'(s)| < 1` are assumed.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn params(&self) -> Vec<(String, f64)> {
        let mut v = match &self.kind {
            RateKind::Linear { c } | RateKind::LinQuad { c } => vec![("c".to_string(), *c)],
            RateKind::Power { alpha } | RateKind::SuperExp { alpha } => vec![("alpha".to_string(), *alpha)],
            RateKind::LogPow { p } => vec![("p".to_string(), *p)],
            RateKind::Custom(_) | RateKind::Induced(_) => vec![],
        };
        v.push(("radius".to_string(), self.radius));
        v
    }

    /// `q(s)` for `s >= 0`.
    pub fn q(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            RateKind::Linear { c } => c * s,
            RateKind::Power { alpha } => s.powf(*alpha),
            RateKind::LogPow { p } => s / (-s.ln()).powf(*p),
            RateKind::LinQuad { c } => c * s + s * s,
            RateKind::SuperExp { alpha } => s - s.powf(1.0 + alpha),
            RateKind::Custom(f) => f.eval(s),
            RateKind::Induced(lr) => {
                // q is the parametric curve ((x + Q)/sqrt2, (x - Q)/sqrt2).
                let lr = lr.clone();
                let big_q = move |x: f64| x * lr(x.ln()).exp();
                let x = numeric::bisect(|x| (x + big_q(x)) / SQRT_2 - s, 0.0, SQRT_2 * s, 0.0).unwrap_or(0.0);
                (x - big_q(x)) / SQRT_2
            }
        }
    }

    pub fn q_prime(&self, s: f64) -> f64 {
        match &self.kind {
            RateKind::Linear { c } => *c,
            RateKind::Power { alpha } => alpha * s.powf(alpha - 1.0),
            RateKind::LogPow { p } => {
                let l = -s.ln();
                l.powf(-p) + p * l.powf(-p - 1.0)
            }
            RateKind::LinQuad { c } => c + 2.0 * s,
            RateKind::SuperExp { alpha } => 1.0 - (1.0 + alpha) * s.powf(*alpha),
            RateKind::Custom(f) => f.derivative(s),
            RateKind::Induced(_) => numeric::forward_derivative(|t| self.q(t), s, 1e-6),
        }
    }

    /// `q'(0)` and whether the value is exact (closed form) or estimated.
    pub fn q_prime_at_zero(&self) -> (f64, bool) {
        match &self.kind {
            RateKind::Linear { c } | RateKind::LinQuad { c } => (*c, true),
            RateKind::Power { .. } | RateKind::LogPow { .. } => (0.0, true),
            RateKind::SuperExp { .. } => (1.0, true),
            RateKind::Custom(f) => (numeric::forward_derivative(|t| f.eval(t), 0.0, 1e-6), false),
            RateKind::Induced(_) => (numeric::forward_derivative(|t| self.q(t), 0.0, 1e-6), false),
        }
    }

    /// `ln(q(s)/s)` as a function of `ln s`.
    pub fn log_ratio(&self, ln_s: f64) -> f64 {
        match &self.kind {
            RateKind::Linear { c } => c.ln(),
            RateKind::Power { alpha } => (alpha - 1.0) * ln_s,
            RateKind::LogPow { p } => -p * (-ln_s).ln(),
            RateKind::LinQuad { c } => (c + ln_s.exp()).ln(),
            RateKind::SuperExp { alpha } => (-(alpha * ln_s).exp()).ln_1p(),
            RateKind::Custom(_) | RateKind::Induced(_) => {
                let s = ln_s.exp();
                (self.q(s) / s).ln()
            }
        }
    }

    /// `ln(1 - q(s)/s)` as a function of `ln s`.
    pub fn log_defect(&self, ln_s: f64) -> f64 {
        match &self.kind {
            RateKind::Linear { c } => (-c).ln_1p(),
            RateKind::LinQuad { c } => (1.0 - c - ln_s.exp()).ln(),
            RateKind::SuperExp { alpha } => alpha * ln_s,
            _ => (-self.log_ratio(ln_s).exp()).ln_1p(),
        }
    }

    /// `s - q(s)`, arranged to avoid cancellation where a closed form allows.
    fn defect(&self, s: f64) -> f64 {
        match &self.kind {
            RateKind::Linear { c } => s * (1.0 - c),
            RateKind::LinQuad { c } => s * (1.0 - c) - s * s,
            RateKind::SuperExp { alpha } => s.powf(1.0 + alpha),
            RateKind::Custom(_) | RateKind::Induced(_) => s - self.q(s),
            _ => s * self.log_defect(s.ln()).exp(),
        }
    }

    /// `Q(x)` through a bisection for `(q + id)^{-1}(sqrt2 x)` on `[0, sqrt2 x]`.
    pub fn capital_q(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if let RateKind::Induced(lr) = &self.kind {
            return Ok(x * lr(x.ln()).exp());
        }
        let target = SQRT_2 * x;
        let h = |y: f64| y + self.q(y) - target;
        let (lo, hi) = (0.0, target);
        if !(h(lo) <= 0.0 && h(hi) >= 0.0) {
            return Err(Error::InversionFailure { x });
        }
        let y = numeric::bisect(h, lo, hi, 0.0).ok_or(Error::InversionFailure { x })?;
        if self.q_prime(y) <= -1.0 {
            return Err(Error::InversionFailure { x });
        }
        Ok(self.defect(y) / SQRT_2)
    }

    /// `ln(Q(x)/x)` as a function of `ln x`, valid far below the float range.
    pub fn log_q_ratio(&self, ln_x: f64) -> Result<f64> {
        if let RateKind::Induced(lr) = &self.kind {
            return Ok(lr(ln_x));
        }
        if ln_x > PLAIN_FLOOR.ln() {
            let x = ln_x.exp();
            let qx = self.capital_q(x)?;
            // Fast laws can drop below the float range in one step.
            if qx >= PLAIN_FLOOR || matches!(self.kind, RateKind::Custom(_)) {
                return Ok((qx / x).ln());
            }
        }
        if matches!(self.kind, RateKind::Custom(_)) {
            return Err(Error::InversionFailure { x: 0.0 });
        }
        // Solve ln y + ln(1 + q(y)/y) = ln x + ln sqrt2 for m = ln y.
        let rhs = ln_x + LN_SQRT2;
        let g = |m: f64| m + self.log_ratio(m).exp().ln_1p() - rhs;
        let m = numeric::bisect(g, rhs - LN_2 - 1.0, rhs + 1.0, 0.0).ok_or(Error::InversionFailure { x: 0.0 })?;
        Ok(m + self.log_defect(m) - LN_SQRT2 - ln_x)
    }

    /// `N + 1` iterates of `Q` from `x0`.
    pub fn iterate(&self, x0: f64, n: usize) -> Result<QIterates> {
        let mut out =
            QIterates { values: Vec::with_capacity(n + 1), neg_log: Vec::with_capacity(n + 1), underflow_from: None };
        let mut x = x0;
        let mut nl = -x0.ln();
        out.values.push(x);
        out.neg_log.push(nl);
        for k in 1..=n {
            if x >= PLAIN_FLOOR {
                x = self.capital_q(x)?;
                if x >= PLAIN_FLOOR {
                    nl = -x.ln();
                } else {
                    nl -= self.log_q_ratio(-nl)?;
                    x = (-nl).exp();
                }
            } else {
                nl -= self.log_q_ratio(-nl)?;
                x = (-nl).exp();
            }
            if x < 1e-300 {
                out.underflow_from.get_or_insert(k);
                out.values.push(1e-300);
            } else {
                out.values.push(x);
            }
            out.neg_log.push(nl);
        }
        Ok(out)
    }

    /// Samples `(0, radius]` and reports the first point where
    /// `0 < q(s) < s` or `|q'(s)| < 1` fails.
    pub fn validate(&self) -> std::result::Result<(), (f64, String)> {
        if matches!(self.kind, RateKind::Induced(_)) {
            return Ok(());
        }
        let hi = self.radius.min(1e6);
        for s in numeric::log_grid_desc(hi, hi * 1e-12, 400) {
            let q = self.q(s);
            if !(q > 0.0 && q < s) {
                return Err((s, format!("q({s}) = {q} is not in (0, s)")));
            }
            let d = self.q_prime(s);
            if !(d.abs() < 1.0) {
                return Err((s, format!("|q'({s})| = {} is not below 1", d.abs())));
            }
        }
        Ok(())
    }
}

fn positive(v: f64, tag: &str) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::UnknownTag(tag.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_half_gives_third() {
        let law = RateLaw::linear(0.5);
        assert!((law.capital_q(1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(law.capital_q(0.0).unwrap(), 0.0);
    }

    #[test]
    fn capital_q_defining_identity() {
        for law in [RateLaw::power(2.0), RateLaw::logpow(1.0), RateLaw::linquad(0.5), RateLaw::superexp(1.0)] {
            for x in [1e-8, 1e-4, 0.01, 0.05] {
                let qx = law.capital_q(x).unwrap();
                let y = (SQRT_2 * x + SQRT_2 * qx) / 2.0;
                let res = SQRT_2 * x - (law.q(y) + y);
                assert!(res.abs() <= 1e-10, "{} at {x}: {res}", law.tag());
            }
        }
    }

    #[test]
    fn log_ratio_matches_plain_domain() {
        for law in [RateLaw::power(2.0), RateLaw::logpow(1.0), RateLaw::linquad(0.5), RateLaw::superexp(1.0)] {
            let x: f64 = 1e-3;
            let plain = (law.capital_q(x).unwrap() / x).ln();
            // Force the log-domain branch by temporarily solving it directly.
            let rhs = x.ln() + LN_SQRT2;
            let g = |m: f64| m + law.log_ratio(m).exp().ln_1p() - rhs;
            let m = numeric::bisect(g, rhs - LN_2 - 1.0, rhs + 1.0, 0.0).unwrap();
            let logd = m + law.log_defect(m) - LN_SQRT2 - x.ln();
            assert!((plain - logd).abs() < 1e-9, "{}: {plain} vs {logd}", law.tag());
        }
    }

    #[test]
    fn iterate_geometric() {
        let it = RateLaw::linear(0.5).iterate(1.0, 3).unwrap();
        let want = [1.0, 1.0 / 3.0, 1.0 / 9.0, 1.0 / 27.0];
        for (a, b) in it.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn iterate_past_underflow() {
        let it = RateLaw::linear(0.5).iterate(1.0, 1000).unwrap();
        assert!(it.underflow_from.is_some());
        let last = it.neg_log[1000];
        assert!((last / 1000.0 - 3f64.ln()).abs() < 1e-9);
        assert!(it.neg_log.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn tags_parse() {
        assert!(RateLaw::from_tag("power:2").is_ok());
        assert!(RateLaw::from_tag("logpow:1").is_ok());
        assert!(RateLaw::from_tag("linear:1.5").is_err());
        assert!(RateLaw::from_tag("power:0.5").is_err());
        assert!(RateLaw::from_tag("bogus:1").is_err());
    }

    #[test]
    fn shipped_laws_validate() {
        for law in [
            RateLaw::linear(0.5),
            RateLaw::power(2.0),
            RateLaw::logpow(1.0),
            RateLaw::logpow(2.0),
            RateLaw::linquad(0.5),
            RateLaw::superexp(1.0),
        ] {
            assert!(law.validate().is_ok(), "{}: {:?}", law.tag(), law.validate());
        }
    }
}
