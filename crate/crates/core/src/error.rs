use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// `F(p)` is numerically 1, so `f(p) / (1 - F(p))` is undefined.
    #[error("hazard rate undefined at p = {price}: cdf saturated")]
    HazardSaturated { price: f64 },

    #[error("optimal-price oracle failed: {0}")]
    Oracle(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("regression matrix is singular (perturbation variance is zero)")]
    SingularRegression,

    #[error("diagnostic failure: {0}")]
    Diagnostic(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
