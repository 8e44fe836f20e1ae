use kelfi_core::rng::derive_seed;

use crate::error::{SimError, SimResult};
use crate::series::SummaryVector;

/// Stream id for reseeding after a non-finite simulation.
const RESAMPLE_STREAM: u64 = 0x5245_5341_4d50;

/// A seeded simulator mapping parameters to summary statistics.
pub trait Simulator {
    fn name(&self) -> &'static str;

    fn param_dim(&self) -> usize;

    fn schema(&self) -> Vec<String>;

    fn summaries(&self, theta: &[f64], seed: u64) -> SimResult<SummaryVector>;

    /// Raw observations as a flat vector of points, for kernels that compare
    /// whole datasets.
    fn dataset(&self, _theta: &[f64], _seed: u64) -> SimResult<Vec<f64>> {
        Err(SimError::Unsupported("raw datasets"))
    }
}

/// Summaries at `theta`, reseeding deterministically when the output is not
/// finite. Returns the summaries and the number of discarded attempts.
pub fn simulate_finite(
    sim: &dyn Simulator,
    theta: &[f64],
    seed: u64,
    max_attempts: usize,
) -> SimResult<(SummaryVector, usize)> {
    for attempt in 0..max_attempts.max(1) {
        let s = if attempt == 0 {
            seed
        } else {
            derive_seed(seed, RESAMPLE_STREAM, attempt as u64)
        };
        match sim.summaries(theta, s) {
            Ok(x) if x.is_finite() => return Ok((x, attempt)),
            Ok(_) | Err(SimError::NonFinite) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SimError::Exhausted(max_attempts.max(1)))
}
