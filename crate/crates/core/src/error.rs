use thiserror::Error;

/// Errors raised by the numerical routines and the file interfaces.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("convergence failure: {what} (bracket [{lo}, {hi}])")]
    Convergence { what: String, lo: f64, hi: f64 },

    #[error("resource limit exceeded: {what} needs {needed}, cap is {cap}")]
    Resource {
        what: &'static str,
        needed: u128,
        cap: u128,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("weight is not integrable on the requested region: {0}")]
    NonIntegrable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors that stem from a numerical procedure failing to converge.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::Calibration(_))
    }
}
