use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A ratio or moment has a vanishing denominator.
    #[error("undefined value: {0}")]
    Undefined(String),

    #[error("truncation at n_max = {n_max} leaves tail {tail:.3e} above tolerance {tolerance:.1e}; use n_max >= {suggested}")]
    Truncation {
        n_max: usize,
        tail: f64,
        tolerance: f64,
        suggested: usize,
    },

    /// Iterative solver hit its cap. Carries the best iterate found.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("non-physical state: {0}")]
    NonPhysical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn undefined(msg: impl Into<String>) -> Self {
        Error::Undefined(msg.into())
    }

    /// Numerical failures as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Undefined(_) | Error::NonConvergence { .. } | Error::NonPhysical(_) | Error::Truncation { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
