use thiserror::Error;

use crate::tensor::LayoutId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("gradient layout {actual:?} does not match parameter layout {expected:?}")]
    Layout { expected: LayoutId, actual: LayoutId },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("IDX format error: {0}")]
    Format(String),

    #[error("IDX payload truncated: {0}")]
    Length(String),

    #[error("batch plan invariant violated: {0}")]
    Plan(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance factor is singular; reconstruction is impossible")]
    Singular,

    #[error("refused: {0}")]
    Refused(String),

    #[error("configuration invalid; offending keys: {}", .0.join(", "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Json(_) => 2,
            Error::Io(_) => 1,
            _ => 3,
        }
    }
}
