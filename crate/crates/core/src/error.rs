use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or unreadable input (files, arguments, logs).
    Input,
    /// Incompatible matrix or tensor shapes.
    Shape,
    /// Numerical failure: non-convergence, divergence, degenerate norms.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{0} is all-zero (ratio undefined)")]
    ZeroMatrix(String),

    #[error("columns are not orthonormal (max |QᵀQ - I| = {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error(
        "{what} did not converge after {iterations} iterations \
         (estimate {estimate:.6e}, residual {residual:.3e})"
    )]
    NotConverged {
        what: &'static str,
        iterations: usize,
        estimate: f64,
        residual: f64,
    },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("malformed container: {0}")]
    Format(String),

    #[error("tensor `{tensor}`: {message}")]
    Tensor { tensor: String, message: String },

    #[error("tensor `{tensor}` has unsupported element type {dtype}")]
    UnsupportedDtype { tensor: String, dtype: String },

    #[error("adapter `{target}`: {message}")]
    Adapter { target: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Log { line: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::ShapeMismatch { .. } => ErrorKind::Shape,
            Error::ZeroMatrix(_)
            | Error::NotConverged { .. }
            | Error::Diverged { .. }
            | Error::NonFinite(_)
            | Error::NotOrthonormal { .. } => ErrorKind::Numeric,
            Error::InvalidArgument(_)
            | Error::Format(_)
            | Error::Tensor { .. }
            | Error::UnsupportedDtype { .. }
            | Error::Adapter { .. }
            | Error::Io { .. }
            | Error::Log { .. }
            | Error::Json(_) => ErrorKind::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(
        context: impl Into<String>,
        expected: (usize, usize),
        found: (usize, usize),
    ) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}
