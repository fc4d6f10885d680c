use thiserror::Error;

/// Errors raised by the geometry, verification and CLI layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A point or coordinate left the region where a chart, logarithm or
    /// deformation parameter is valid. Callers are expected to resample.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an operation's precondition (mismatched fibers,
    /// incompatible factors, wrong flavor, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A matrix failed the defining relations of its group or algebra.
    #[error("membership violation in {model}: residual {residual:e}")]
    Membership { model: String, residual: f64 },

    /// A deformation family rejected its construction input.
    #[error("precondition failed: {reason} (offending t = {t})")]
    Precondition { reason: String, t: f64 },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain(_))
    }
}
