//! Exponential observations with a Gamma prior on the rate.
//!
//! The summary is the sample mean of `n` draws from `Exp(θ)`. Under a
//! `Gamma(a, b)` prior (shape, rate) the exact posterior given the raw
//! data is `Gamma(a + n, b + Σyᵢ)`.

use kelfi_core::rng::rng_from_seed;
use rand::Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{check_dim, SimError, SimResult};
use crate::series::SummaryVector;
use crate::simulator::Simulator;

pub const SCHEMA: [&str; 1] = ["mean"];

/// `n` draws from `Exp(theta)`.
pub fn expgamma_data(theta: f64, n: usize, seed: u64) -> SimResult<Vec<f64>> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(SimError::InvalidParameter(format!("rate must be > 0, got {theta}")));
    }
    let dist = Exp::new(theta).map_err(|e| SimError::InvalidParameter(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    Ok((0..n).map(|_| rng.sample(dist)).collect())
}

/// Sample mean of `n` draws from `Exp(theta)`.
pub fn expgamma_simulate(theta: f64, n: usize, seed: u64) -> SimResult<SummaryVector> {
    if n == 0 {
        return Err(SimError::InvalidParameter("n must be >= 1".into()));
    }
    let data = expgamma_data(theta, n, seed)?;
    Ok(SummaryVector::new(vec![data.iter().sum::<f64>() / n as f64], &SCHEMA))
}

/// Gamma distribution in shape-rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaDensity {
    pub shape: f64,
    pub rate: f64,
}

impl GammaDensity {
    pub fn new(shape: f64, rate: f64) -> SimResult<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(SimError::InvalidParameter("gamma needs shape, rate > 0".into()));
        }
        Ok(Self { shape, rate })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        (self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
            - self.rate * x)
            .exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            gamma_lr(self.shape, self.rate * x)
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    pub fn stddev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// `(shape − 1)/rate`, or 0 when `shape < 1`.
    pub fn mode(&self) -> f64 {
        ((self.shape - 1.0) / self.rate).max(0.0)
    }
}

/// Conjugate posterior from the raw observations.
pub fn expgamma_true_posterior(prior: GammaDensity, data: &[f64]) -> GammaDensity {
    GammaDensity {
        shape: prior.shape + data.len() as f64,
        rate: prior.rate + data.iter().sum::<f64>(),
    }
}

/// Conjugate posterior when only the sample mean of `n` draws is known.
pub fn expgamma_posterior_from_mean(prior: GammaDensity, mean: f64, n: usize) -> GammaDensity {
    GammaDensity {
        shape: prior.shape + n as f64,
        rate: prior.rate + n as f64 * mean,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpGamma {
    pub n: usize,
}

impl Default for ExpGamma {
    fn default() -> Self {
        Self { n: 15 }
    }
}

impl Simulator for ExpGamma {
    fn name(&self) -> &'static str {
        "expgamma"
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn schema(&self) -> Vec<String> {
        SCHEMA.iter().map(|s| s.to_string()).collect()
    }

    fn summaries(&self, theta: &[f64], seed: u64) -> SimResult<SummaryVector> {
        check_dim(1, theta.len())?;
        expgamma_simulate(theta[0], self.n, seed)
    }

    fn dataset(&self, theta: &[f64], seed: u64) -> SimResult<Vec<f64>> {
        check_dim(1, theta.len())?;
        expgamma_data(theta[0], self.n, seed)
    }
}
