use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("kepler solver did not converge (e = {e}, mean anomaly = {mean_anomaly})")]
    KeplerNonConvergence { e: f64, mean_anomaly: f64 },

    #[error("trajectory {index} produced a non-finite state at tau = {tau}")]
    NonFinite { index: usize, tau: f64 },

    #[error("norm drift {drift:e} exceeds tolerance {tol:e} at tau = {tau}")]
    NormDrift { drift: f64, tol: f64, tau: f64 },

    #[error("basis truncation violated: edge probability {prob:e} at tau = {tau} (K = {k})")]
    Truncation { prob: f64, tau: f64, k: usize },

    #[error("{count} samples fall outside the histogram range |Jz| <= {limit}")]
    OutOfRange { count: usize, limit: f64 },

    #[error("distribution ranges do not match: {0}")]
    RangeMismatch(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("realization {index} failed: {source}")]
    Realization {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("integrity check failed for {file}: {reason}")]
    Integrity { file: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
