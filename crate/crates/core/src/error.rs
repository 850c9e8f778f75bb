use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument violates a documented precondition.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    /// A computation produced non-finite values or failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("training data is not linearly separable: {0}")]
    NotSeparable(String),
}

impl Error {
    /// True for errors caused by bad inputs rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Dimension { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
