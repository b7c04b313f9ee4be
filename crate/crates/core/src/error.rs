use std::path::PathBuf;

use thiserror::Error;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A file was readable but its contents do not match the expected format.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Depth correction was asked to run without any LiDAR anchor.
    #[error("unanchored system: no LiDAR point lands within 1 px of a graph node")]
    Unanchored,

    /// The iterative solver hit its iteration budget.
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    /// A numerical routine produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The optimizer produced a non-finite loss or gradient; `last` is the final finite state.
    #[error("optimization diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        last: Box<crate::depthopt::OptimizeState>,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical kind (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Unanchored | Error::NotConverged { .. } | Error::Numerical(_) | Error::Diverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
