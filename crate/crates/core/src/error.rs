use thiserror::Error;

/// Errors produced by the simulation, estimation and transport routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("grid truncates {clipped_mass:.3e} of the probability mass (limit 1e-6)")]
    Truncation { clipped_mass: f64 },

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("non-finite particle position at step {step}")]
    BlowUp { step: usize },

    #[error("time step {dt:.3e} violates the stability bound; use dt <= {max_dt:.3e}")]
    Stability { dt: f64, max_dt: f64 },

    #[error("negative density {value:.3e} in cell {cell}")]
    NegativeDensity { value: f64, cell: usize },

    #[error("support of {size} atoms exceeds the exact solver limit of {limit}; use the entropic backend")]
    Scale { size: usize, limit: usize },

    #[error("no convergence after {iterations} iterations (marginal violation {violation:.3e})")]
    Convergence { iterations: usize, violation: f64 },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    /// Wraps the error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
