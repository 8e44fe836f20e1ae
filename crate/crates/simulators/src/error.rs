use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("simulator produced non-finite output")]
    NonFinite,
    #[error("gave up after {0} non-finite simulations")]
    Exhausted(usize),
    #[error("{0} is not supported by this simulator")]
    Unsupported(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type SimResult<T> = std::result::Result<T, SimError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> SimResult<()> {
    if expected == got {
        Ok(())
    } else {
        Err(SimError::DimensionMismatch { expected, got })
    }
}
