use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical refusal: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("simulation failed: {0}")]
    Simulation(#[from] kelfi_sim::SimError),
    #[error(transparent)]
    Core(kelfi_core::Error),
}

impl From<kelfi_core::Error> for HarnessError {
    fn from(e: kelfi_core::Error) -> Self {
        match e {
            kelfi_core::Error::NonPositiveEvidence(q) => HarnessError::Numerical(refusal_message(q)),
            other => HarnessError::Core(other),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

pub fn refusal_message(q: f64) -> String {
    format!(
        "marginal surrogate likelihood q(y) = {q:e} is not positive after learning; \
         the simulations cannot reproduce the observed summaries at these scales, \
         which usually means the simulator is misspecified for this data or the \
         budget is too small"
    )
}

impl HarnessError {
    /// Process exit code: 2 config, 3 numerical refusal, 4 I/O, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::Io(_) => 4,
            HarnessError::Simulation(_) | HarnessError::Core(_) => 1,
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;
