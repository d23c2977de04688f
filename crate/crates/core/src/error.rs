use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input value violates a documented precondition. `field` names it.
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    /// A numerical guard refused to continue (undersampling, failed bisection).
    #[error("numerical guard: {0}")]
    NumericalGuard(String),

    #[error("malformed {format} data: {reason}")]
    Parse { format: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Parse {
            format,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
