use thiserror::Error;

/// Every failure the library can report. Variants carry the offending value so
/// that a report can reproduce the problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no branch of the rotated map found at x = {x}")]
    NoBranchFound { x: f64 },
    #[error("{count} branches found at x = {x}, more than the bound {bound}")]
    BranchOverflow { x: f64, count: usize, bound: usize },
    #[error("empty value set at x = {x}")]
    EmptyValueSet { x: f64 },
    #[error("invalid boundary relation: {0}")]
    InvalidRelation(String),
    #[error("q + id is not increasing on the bracket for x = {x}")]
    InversionFailure { x: f64 },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("time window around t = {t} leaves the computed range [0, {max}]")]
    WindowOutOfRange { t: f64, max: f64 },
    #[error("q'(0) = {q_prime} is too close to a regime boundary to classify")]
    AmbiguousRegime { q_prime: f64 },
    #[error("operation needs regime {expected}, rate law is in regime {found}")]
    RegimeMismatch { expected: String, found: String },
    #[error("quadrature did not reach tolerance at z = {z} (error estimate {estimate})")]
    QuadratureFailure { z: f64, estimate: f64 },
    #[error("could not bracket the inverse at n = {n}")]
    BracketFailure { n: f64 },
    #[error("regression fit rejected: R^2 = {r2}")]
    FitFailure { r2: f64 },
    #[error("construction failed at stage '{stage}': {detail}")]
    ConstructionFailure { stage: String, detail: String },
    #[error("hypothesis mismatch: {0}")]
    HypothesisMismatch(String),
    #[error("samples are not monotone: {0}")]
    MonotonicityViolation(String),
    #[error("truncated tail mass {tail} exceeds 1% of the target mass {total}")]
    TruncationTooCoarse { tail: f64, total: f64 },
    #[error("mu({r}) = {mu} is not below r")]
    NotStrictDamping { r: f64, mu: f64 },
    #[error("perturbation rejection not certified: {0}")]
    ConditionNotCertified(String),
    #[error("unknown or malformed tag '{0}'")]
    UnknownTag(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
