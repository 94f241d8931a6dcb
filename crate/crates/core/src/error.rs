use thiserror::Error;

/// Errors raised across the theory, simulation and training layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("non-finite value {what} at {location}")]
    NonFinite { what: String, location: String },

    #[error("pole of {what} at z = {at}")]
    Pole { what: &'static str, at: String },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: String, iterations: usize },

    #[error("size guard violated: {0}")]
    Guard(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("IDX format error at byte {offset}: {message}")]
    Idx { offset: usize, message: String },

    #[error("no sign change for bisection on [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of an iterative numerical method.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::NoConvergence { .. } | Error::Pole { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
