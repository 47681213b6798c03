use thiserror::Error;

#[derive(Debug, Error)]
pub enum NesttError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl NesttError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        NesttError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical routines themselves, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, NesttError::Convergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, NesttError>;
