use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite training loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "model has {param_count} parameters, above the dense limit of {limit}; \
         use the conjugate-gradient solver instead"
    )]
    DenseLimit { param_count: usize, limit: usize },

    #[error("{0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures that come from the numbers themselves rather than
    /// from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::Numerical(_) | Error::Degenerate(_)
        )
    }
}
