use thiserror::Error;

#[derive(Debug, Error)]
pub enum EpiError {
    #[error("invalid duration distribution for phase {phase}: {reason}")]
    InvalidDistribution { phase: String, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("day {day} out of range 1..={h}")]
    DayOutOfRange { day: usize, h: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e}, estimate {estimate})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        estimate: f64,
    },

    #[error("series contains a nonpositive value {value} at position {index}")]
    NonPositiveSeries { index: usize, value: f64 },

    #[error("series too short: need at least {needed} points, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("process is supercritical (spectral radius {rho}); expected total diverges")]
    Supercritical { rho: f64 },

    #[error("path enumeration exceeded cap of {cap} paths")]
    PathCapExceeded { cap: usize },

    #[error("singular innovation covariance")]
    SingularInnovation,

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("reciprocity violated for pairs {pairs:?}")]
    Reciprocity { pairs: Vec<(usize, usize)> },

    #[error("routing row {row} sums to {sum}, exceeding 1")]
    RowSum { row: usize, sum: f64 },

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("no finite loss on any grid point")]
    NoFiniteLoss,

    #[error("config parse error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, EpiError>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> EpiError {
    EpiError::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
