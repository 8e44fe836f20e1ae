use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid length scale {0} (must be positive and finite)")]
    InvalidScale(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("factorization of the regularized Gram matrix failed (non-PSD input or lambda <= 0)")]
    Factorization,

    #[error(
        "marginal surrogate likelihood q(y) = {0:e} is not positive; the simulator cannot \
         reproduce the observation at this tolerance, posterior queries are refused"
    )]
    NonPositiveEvidence(f64),

    #[error("point {value} is outside the interior of the support in dimension {dim}")]
    OutOfSupport { dim: usize, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
