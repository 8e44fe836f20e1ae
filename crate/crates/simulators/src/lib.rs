//! Benchmark simulators for likelihood-free inference, with their summary
//! statistics, a conjugate posterior for the exponential-gamma toy, and the
//! prior-normalized mean squared error used to score point estimates.
//!
//! Every simulator is a pure function of `(parameters, seed)`.

pub mod blowfly;
pub mod error;
pub mod expgamma;
pub mod lotka_volterra;
pub mod nmse;
pub mod series;
pub mod simulator;

pub use error::{SimError, SimResult};
pub use series::{SummaryVector, TimeSeries};
pub use simulator::{simulate_finite, Simulator};
