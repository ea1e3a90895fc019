use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Why an integration run was aborted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortKind {
    /// Population leaked into the top Fock levels.
    Truncation,
    /// Trace moved away from one; the step size is too large.
    TraceDrift,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("truncation unsafe: {0}")]
    TruncationUnsafe(String),

    #[error("integration aborted at t = {time}: {reason}")]
    Aborted {
        kind: AbortKind,
        time: f64,
        reason: String,
    },

    #[error("quadrature rejected: {0}")]
    Quadrature(String),

    #[error("degenerate spectrum: {0}")]
    Degenerate(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("plot failed: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::TruncationUnsafe(_) | Error::Aborted { .. } => 3,
            Error::Quadrature(_) => 4,
            Error::Degenerate(_) => 5,
            _ => 1,
        }
    }
}
