use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (index range, parameter domain, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_estimate})")]
    NonConvergence { iterations: usize, last_estimate: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("objective increased from {before} to {after} at sweep {sweep}")]
    ObjectiveIncrease { sweep: usize, before: f64, after: f64 },

    /// Theorem-bound continuation needs a positive smallest singular value.
    #[error("smallest singular value is zero; supply a final rho value explicitly")]
    DegenerateSpectrum,

    #[error("{path}: malformed header: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("{path}: truncated payload: expected {expected} bytes, found {found}")]
    Truncated { path: PathBuf, expected: u64, found: u64 },

    #[error("{path}:{line}: {reason}")]
    Record { path: PathBuf, line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NonFinite(_)
                | Error::ObjectiveIncrease { .. }
                | Error::DegenerateSpectrum
        )
    }
}
