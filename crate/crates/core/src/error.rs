use std::path::PathBuf;

/// Errors produced by the authentication library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is out of its admissible range.
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A mixture component received (numerically) zero responsibility mass.
    #[error("component {component} is degenerate (responsibility mass {mass:e})")]
    DegenerateComponent { component: usize, mass: f64 },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    /// EM kept producing degenerate components after the retry budget.
    #[error("mixture fit failed after {attempts} attempts: {reason}")]
    FitFailure { attempts: usize, reason: String },

    /// A block refit failed; the authenticator state was left unchanged.
    #[error("model update failed at block {block}: {source}")]
    BlockUpdate {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("format error: {0}")]
    Format(String),

    /// A snapshot document could not be decoded.
    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
