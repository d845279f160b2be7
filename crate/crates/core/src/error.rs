use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("side {side} is not a multiple of h = {h} (ratio {ratio})")]
    Commensurability { side: f64, h: f64, ratio: f64 },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("overlap error: {0}")]
    Overlap(String),

    #[error("empty operator: {0}")]
    EmptyOperator(String),

    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),

    #[error("convergence failure: {message} (iterations {iterations}, residual {residual:e})")]
    ConvergenceFailure {
        message: String,
        iterations: usize,
        residual: f64,
    },

    #[error("exactness violation in {identity}: max |entry| = {max_abs}")]
    ExactnessViolation { identity: String, max_abs: i64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the request rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        !matches!(
            self,
            Error::ConvergenceFailure { .. } | Error::ExactnessViolation { .. }
        )
    }
}
