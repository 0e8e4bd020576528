use thiserror::Error;

/// Errors raised by the models and solvers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("{what} = {value} outside valid interval [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid scenario: {field}: {message}")]
    Validation { field: String, message: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("integration aborted at t = {t:.3} s: {reason}")]
    IntegrationAbort { t: f64, reason: String },

    #[error("solver did not converge after {iterations} iterations (best residual {best_residual:.3e})")]
    NotConverged {
        iterations: usize,
        best_residual: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
