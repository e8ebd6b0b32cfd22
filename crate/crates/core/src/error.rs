use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario line {line}: {message}")]
    Config { line: usize, message: String },

    /// A simulation invariant was violated. The run is aborted.
    #[error("invariant violated at t={time_min:.6} min: {message}")]
    Invariant { time_min: f64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub(crate) fn invariant(time_min: f64, message: impl Into<String>) -> Self {
        Error::Invariant {
            time_min,
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 1 for configuration problems, 2 for
    /// invariant violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant { .. } => 2,
            _ => 1,
        }
    }
}
