use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("not enough samples: need at least {needed}, got {got}{hint}")]
    TooFewSamples {
        needed: usize,
        got: usize,
        hint: &'static str,
    },

    #[error("matrix is not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("moment system ill-posed: {0}")]
    IllPosed(String),

    #[error("insufficient local data: {found} points within bandwidth, need {needed}")]
    InsufficientLocalData { found: usize, needed: usize },

    #[error("quadrature did not converge (achieved error {achieved:e}, tolerance {tolerance:e})")]
    Quadrature { achieved: f64, tolerance: f64 },

    #[error("deterministic relation: both residual variances below {0:e}")]
    DeterministicRelation(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("generator failed: {0}")]
    Generator(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
