use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Ω must be strictly inside Q (L = {l}, R = {r})")]
    DomainNotInside { l: f64, r: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-solvable potential: {0}")]
    NonSolvable(String),

    #[error("non-solvable potential in DN column {column}: {reason}")]
    DnColumn { column: usize, reason: String },

    #[error("conductivity must be strictly positive (min = {0})")]
    NonPositiveConductivity(f64),

    #[error("no contraction at ρ = {rho} (difference ratios {ratios:?})")]
    NoContraction { rho: f64, ratios: Vec<f64> },

    #[error("max_iter = {max_iter} exceeded (last difference {last_diff:e})")]
    MaxIter { max_iter: usize, last_diff: f64 },

    #[error("boundary trace must vanish (max |w| on ∂Ω = {0:e})")]
    NonzeroTrace(f64),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CalError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CalError::InvalidArgument(msg.into()))
}
