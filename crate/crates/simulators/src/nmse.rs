//! Prior-normalized mean squared error of simulated summaries.
//!
//! For a parameter source, the per-statistic MSE is the average of
//! `(x_k − y_k)²` over simulated summaries `x` against the observed `y`.
//! NMSE divides it by the same quantity under prior draws, averages over
//! statistics and reports a percentage, so the prior itself scores 100%.

use kelfi_core::rng::derive_seed;

use crate::error::{check_dim, SimError, SimResult};
use crate::series::SummaryVector;
use crate::simulator::{simulate_finite, Simulator};

const EVAL_STREAM: u64 = 0x4e4d_5345;

/// Maximum reseeding attempts per evaluation simulation.
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub per_stat: Vec<f64>,
    pub resampled: usize,
}

/// Per-statistic MSE over `n_eval` simulations; simulation `i` uses the
/// parameters `params(i)` and a seed derived from `seed` and `i`.
pub fn mse_per_stat(
    sim: &dyn Simulator,
    observed: &SummaryVector,
    mut params: impl FnMut(usize) -> Vec<f64>,
    n_eval: usize,
    seed: u64,
) -> SimResult<MseReport> {
    if n_eval == 0 {
        return Err(SimError::InvalidParameter("n_eval must be >= 1".into()));
    }
    let d = observed.len();
    let mut acc = vec![0.0; d];
    let mut resampled = 0;
    for i in 0..n_eval {
        let theta = params(i);
        let (x, r) = simulate_finite(sim, &theta, derive_seed(seed, EVAL_STREAM, i as u64), MAX_ATTEMPTS)?;
        check_dim(d, x.len())?;
        resampled += r;
        for ((a, xv), yv) in acc.iter_mut().zip(&x.values).zip(&observed.values) {
            *a += (xv - yv) * (xv - yv);
        }
    }
    acc.iter_mut().for_each(|a| *a /= n_eval as f64);
    Ok(MseReport {
        per_stat: acc,
        resampled,
    })
}

/// `100 · mean_k(mse_k / baseline_k)`.
pub fn normalize(mse: &[f64], baseline: &[f64]) -> SimResult<f64> {
    check_dim(baseline.len(), mse.len())?;
    if baseline.iter().any(|b| !(*b > 0.0)) {
        return Err(SimError::InvalidParameter("baseline MSE entries must be > 0".into()));
    }
    let ratio: f64 = mse.iter().zip(baseline).map(|(m, b)| m / b).sum();
    Ok(100.0 * ratio / mse.len() as f64)
}

/// NMSE of a fixed point estimate.
pub fn nmse(
    estimate: &[f64],
    observed: &SummaryVector,
    sim: &dyn Simulator,
    baseline: &[f64],
    n_eval: usize,
    seed: u64,
) -> SimResult<f64> {
    let report = mse_per_stat(sim, observed, |_| estimate.to_vec(), n_eval, seed)?;
    normalize(&report.per_stat, baseline)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo(Vec<f64>);

    impl Simulator for Echo {
        fn name(&self) -> &'static str {
            "echo"
        }
        fn param_dim(&self) -> usize {
            1
        }
        fn schema(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }
        fn summaries(&self, _: &[f64], _: u64) -> SimResult<SummaryVector> {
            Ok(SummaryVector::new(self.0.clone(), &["a", "b"]))
        }
    }

    #[test]
    fn echoing_simulator_scores_zero() {
        let obs = SummaryVector::new(vec![1.0, 2.0], &["a", "b"]);
        let v = nmse(&[0.0], &obs, &Echo(obs.values.clone()), &[1.0, 1.0], 10, 0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn normalize_checks_baseline() {
        assert_eq!(normalize(&[2.0, 6.0], &[1.0, 3.0]).unwrap(), 200.0);
        assert!(normalize(&[1.0], &[0.0]).is_err());
        assert!(normalize(&[1.0], &[1.0, 1.0]).is_err());
    }
}
