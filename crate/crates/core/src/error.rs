use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("assumption {assumption} violated: {detail}")]
    AssumptionViolation { assumption: u8, detail: String },

    #[error("lag horizon {available} is too short, {required} lags are needed")]
    HorizonExceeded { required: usize, available: usize },

    #[error("ill-conditioned computation: {0}")]
    IllConditioned(String),

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("least-squares problem is rank deficient (rank {rank} of {cols} unknowns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("guarantee unavailable: {0}")]
    GuaranteeUnavailable(String),

    #[error("estimator step {k} failed: {source}")]
    Step {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(context: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Coarse category used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Parse(_) => {
                ErrorKind::Input
            }
            Error::AssumptionViolation { .. } => ErrorKind::Model,
            Error::Io(_) => ErrorKind::Io,
            Error::Step { source, .. } => source.kind(),
            Error::HorizonExceeded { .. }
            | Error::IllConditioned(_)
            | Error::Inconsistent(_)
            | Error::RankDeficient { .. }
            | Error::GuaranteeUnavailable(_) => ErrorKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Model,
    Numeric,
    Io,
}

pub type Result<T> = std::result::Result<T, Error>;
