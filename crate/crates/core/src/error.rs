use thiserror::Error;

/// Errors produced by the detection library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular distance: device and access point are co-located")]
    SingularDistance,

    #[error("interference moment diverges for path-loss exponent {alpha} (need alpha > 2)")]
    DivergentMoment { alpha: f64 },

    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),

    #[error("positive-definiteness violated: {0}")]
    NotPositiveDefinite(String),

    #[error("cached inverse drifted by {drift:.3e} (limit {limit:.1e}) at iteration {iteration}")]
    InverseDrift { drift: f64, limit: f64, iteration: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{aborted} of {total} detector runs aborted, above the tolerated fraction {limit}")]
    AbortRate { aborted: usize, total: usize, limit: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
