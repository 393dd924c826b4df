use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid does not cover |y| <= {required} (half-width {half_width})")]
    GridTooNarrow { required: f64, half_width: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("R22 constants unresolved: supply C21 and C23 from the verifier")]
    ConstantsUnresolved,
    #[error("similarity solution left the bounded regime at s = {s}: max|w| = {max_abs}")]
    SimilarityBlowup { s: f64, max_abs: f64 },
    #[error("non-finite value produced at t = {t}")]
    NumericalOverflow { t: f64 },
    #[error("no blow-up detected: {0}")]
    NoBlowup(String),
    #[error("trajectory too sparse: record spacing {spacing} exceeds {limit}")]
    TooSparse { spacing: f64, limit: f64 },
    #[error("insufficient span: {0}")]
    InsufficientSpan(String),
    #[error("t0 out of recorded range: {0}")]
    OutOfRange(String),
    #[error("no convergence at x = {x}: last values differ by {rel_diff}")]
    NonConvergence { x: f64, rel_diff: f64 },
    #[error("step failed at s = {s}: {source}")]
    AtStep { s: f64, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
