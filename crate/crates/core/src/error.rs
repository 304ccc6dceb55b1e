use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("spaces do not match: {0}")]
    SpaceMismatch(String),

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("scale {gamma} is outside the scale domain (fixed at {fixed})")]
    ScaleRestriction { gamma: f64, fixed: f64 },

    #[error("contraction condition violated: norm bound {value} exceeds {limit}")]
    ContractionCondition { value: f64, limit: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("no strong monotonicity guarantee for alpha = 0 and norm 1")]
    NoGuarantee,

    #[error("no value oracle available for {0}")]
    MissingValueOracle(String),

    #[error("did not converge within {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
