//! Mean embeddings of an anisotropic Gaussian prior under the ARD kernel,
//! in closed form or from a fixed set of prior samples.
//!
//! * prior embedding `μ_Θ(θ) = ∫ ℓ(θ, t) p(t) dt = ℓ_ν(θ, μ) ∏_d β_d/ν_d`,
//!   with `ν_d² = β_d² + σ_d²`;
//! * posterior-embedding kernel `h(θ, θ*) = ∫ ℓ(θ, t) ℓ(t, θ*) p(t) dt
//!   = ∏_d (s_d/σ_d) exp[-(a_d - b_d²)/(2 s_d²)]`, with
//!   `s_d⁻² = 2β_d⁻² + σ_d⁻²` and `γ_d² = β_d²/σ_d²`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{ard_unchecked, LengthScales};
use crate::rng::rng_from_seed;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `p(θ) = ∏_d N(θ_d | μ_d, σ_d²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    mean: Vec<f64>,
    stddev: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, stddev: Vec<f64>) -> Result<Self> {
        check_dim(mean.len(), stddev.len())?;
        if mean.is_empty() {
            return Err(Error::Empty("prior mean"));
        }
        if let Some(&s) = stddev.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidScale(s));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("prior mean must be finite".into()));
        }
        Ok(Self { mean, stddev })
    }

    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn stddev(&self) -> &[f64] {
        &self.stddev
    }

    pub fn ln_density(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        Ok(theta
            .iter()
            .zip(&self.mean)
            .zip(&self.stddev)
            .map(|((t, m), s)| {
                let z = (t - m) / s;
                -0.5 * z * z - s.ln() - LN_SQRT_2PI
            })
            .sum())
    }

    pub fn density(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.ln_density(theta)?.exp())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.stddev)
            .map(|(m, s)| {
                let z: f64 = rng.sample(StandardNormal);
                m + s * z
            })
            .collect()
    }

    /// Draw with each standardized coordinate clamped to `±limit`.
    pub fn sample_clamped<R: Rng + ?Sized>(&self, rng: &mut R, limit: f64) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.stddev)
            .map(|(m, s)| {
                let z: f64 = rng.sample(StandardNormal);
                m + s * z.clamp(-limit, limit)
            })
            .collect()
    }
}

/// Fixed prior draws `{θ̃_t}` for the Monte-Carlo embeddings. Shared by all
/// evaluations within one fit so that objectives stay deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSampleSet {
    samples: Vec<Vec<f64>>,
    seed: Option<u64>,
}

impl PriorSampleSet {
    pub fn draw(prior: &GaussianPrior, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Empty("prior samples"));
        }
        let mut rng = rng_from_seed(seed);
        let samples = (0..count).map(|_| prior.sample(&mut rng)).collect();
        Ok(Self {
            samples,
            seed: Some(seed),
        })
    }

    /// Samples from an arbitrary prior, e.g. one without a closed form.
    pub fn from_samples(samples: Vec<Vec<f64>>) -> Result<Self> {
        let dim = samples.first().ok_or(Error::Empty("prior samples"))?.len();
        samples.iter().try_for_each(|s| check_dim(dim, s.len()))?;
        Ok(Self {
            samples,
            seed: None,
        })
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }
}

/// How prior integrals are evaluated.
#[derive(Debug, Clone, Default)]
pub enum EmbeddingMode {
    #[default]
    Closed,
    MonteCarlo(Arc<PriorSampleSet>),
}

/// Per-dimension constants of the closed forms for one `(prior, β)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormTerms {
    pub nu: Vec<f64>,
    pub gamma_sq: Vec<f64>,
    pub s: Vec<f64>,
    mean: Vec<f64>,
    stddev: Vec<f64>,
    beta: Vec<f64>,
    prior_scale: f64,
    posterior_scale: f64,
}

impl ClosedFormTerms {
    pub fn new(prior: &GaussianPrior, beta: &LengthScales) -> Result<Self> {
        check_dim(prior.dim(), beta.dim())?;
        let b = beta.as_slice();
        let sig = prior.stddev();
        let nu: Vec<f64> = b.iter().zip(sig).map(|(b, s)| b.hypot(*s)).collect();
        let gamma_sq = b.iter().zip(sig).map(|(b, s)| (b / s).powi(2)).collect();
        let s: Vec<f64> = b
            .iter()
            .zip(sig)
            .map(|(b, s)| (2.0 / (b * b) + 1.0 / (s * s)).sqrt().recip())
            .collect();
        let prior_scale = b.iter().zip(&nu).map(|(b, n)| b / n).product();
        let posterior_scale = s.iter().zip(sig).map(|(s, sg)| s / sg).product();
        Ok(Self {
            nu,
            gamma_sq,
            s,
            mean: prior.mean().to_vec(),
            stddev: sig.to_vec(),
            beta: b.to_vec(),
            prior_scale,
            posterior_scale,
        })
    }

    /// `∏_d β_d/ν_d`, the supremum of the prior embedding.
    pub fn prior_embedding_max(&self) -> f64 {
        self.prior_scale
    }

    /// `(a_d, b_d)` for one coordinate pair.
    pub fn ab(&self, d: usize, theta: f64, theta_star: f64) -> (f64, f64) {
        let g = self.gamma_sq[d];
        let mu = self.mean[d];
        let denom = 2.0 + g;
        (
            (theta * theta + theta_star * theta_star + g * mu * mu) / denom,
            (theta + theta_star + g * mu) / denom,
        )
    }

    pub fn prior_embedding(&self, theta: &[f64]) -> f64 {
        ard_unchecked(theta, &self.mean, &self.nu) * self.prior_scale
    }

    pub fn posterior_kernel(&self, theta: &[f64], theta_star: &[f64]) -> f64 {
        let mut expo = 0.0;
        for d in 0..theta.len() {
            // a_d - b_d² written as a sum of squares so it cannot go negative
            let g = self.gamma_sq[d];
            let mu = self.mean[d];
            let (t, u) = (theta[d], theta_star[d]);
            let denom = 2.0 + g;
            let gap = ((t - u).powi(2) + g * ((t - mu).powi(2) + (u - mu).powi(2)))
                / (denom * denom);
            expo += gap / (2.0 * self.s[d] * self.s[d]);
        }
        self.posterior_scale * (-expo).exp()
    }

    pub fn stddev(&self) -> &[f64] {
        &self.stddev
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }
}

/// Evaluates `μ_Θ` and `h` for a fixed `(prior, β, mode)`.
#[derive(Debug, Clone)]
pub struct PriorEmbedder {
    beta: LengthScales,
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    Closed(ClosedFormTerms),
    MonteCarlo(Arc<PriorSampleSet>),
}

impl PriorEmbedder {
    pub fn new(prior: &GaussianPrior, beta: &LengthScales, mode: &EmbeddingMode) -> Result<Self> {
        check_dim(prior.dim(), beta.dim())?;
        let inner = match mode {
            EmbeddingMode::Closed => Inner::Closed(ClosedFormTerms::new(prior, beta)?),
            EmbeddingMode::MonteCarlo(set) => {
                check_dim(beta.dim(), set.dim())?;
                Inner::MonteCarlo(Arc::clone(set))
            }
        };
        Ok(Self {
            beta: beta.clone(),
            inner,
        })
    }

    pub fn dim(&self) -> usize {
        self.beta.dim()
    }

    pub fn prior_embedding(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        Ok(match &self.inner {
            Inner::Closed(t) => t.prior_embedding(theta),
            Inner::MonteCarlo(set) => {
                let b = self.beta.as_slice();
                let sum: f64 = set.samples().iter().map(|t| ard_unchecked(t, theta, b)).sum();
                sum / set.len() as f64
            }
        })
    }

    pub fn posterior_kernel(&self, theta: &[f64], theta_star: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        check_dim(self.dim(), theta_star.len())?;
        Ok(match &self.inner {
            Inner::Closed(t) => t.posterior_kernel(theta, theta_star),
            Inner::MonteCarlo(set) => {
                let b = self.beta.as_slice();
                let sum: f64 = set
                    .samples()
                    .iter()
                    .map(|t| ard_unchecked(theta, t, b) * ard_unchecked(t, theta_star, b))
                    .sum();
                sum / set.len() as f64
            }
        })
    }
}

/// `μ_Θ(θ)` in the requested mode.
pub fn prior_embedding(
    theta: &[f64],
    prior: &GaussianPrior,
    beta: &LengthScales,
    mode: &EmbeddingMode,
) -> Result<f64> {
    PriorEmbedder::new(prior, beta, mode)?.prior_embedding(theta)
}

/// `h(θ, θ*)` in the requested mode.
pub fn posterior_embedding_kernel(
    theta: &[f64],
    theta_star: &[f64],
    prior: &GaussianPrior,
    beta: &LengthScales,
    mode: &EmbeddingMode,
) -> Result<f64> {
    PriorEmbedder::new(prior, beta, mode)?.posterior_kernel(theta, theta_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ard_gaussian;
    use approx::assert_relative_eq;

    fn ls(v: &[f64]) -> LengthScales {
        LengthScales::new(v.to_vec()).unwrap()
    }

    #[test]
    fn prior_embedding_substitution() {
        let prior = GaussianPrior::standard(1).unwrap();
        let v = prior_embedding(&[0.0], &prior, &ls(&[1.0]), &EmbeddingMode::Closed).unwrap();
        assert_relative_eq!(v, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn point_mass_prior_collapses() {
        let prior = GaussianPrior::new(vec![0.3, -1.0], vec![1e-9, 1e-9]).unwrap();
        let beta = ls(&[0.7, 1.3]);
        let theta = [1.1, -0.2];
        let closed = prior_embedding(&theta, &prior, &beta, &EmbeddingMode::Closed).unwrap();
        let direct = ard_gaussian(&theta, prior.mean(), &beta).unwrap();
        assert_relative_eq!(closed, direct, max_relative = 1e-6);

        let ts = [0.9, 0.4];
        let h = posterior_embedding_kernel(&theta, &ts, &prior, &beta, &EmbeddingMode::Closed)
            .unwrap();
        let product = direct * ard_gaussian(prior.mean(), &ts, &beta).unwrap();
        assert_relative_eq!(h, product, max_relative = 1e-6);
    }

    #[test]
    fn h_symmetric_case() {
        let prior = GaussianPrior::new(vec![0.4], vec![1.0]).unwrap();
        let h = posterior_embedding_kernel(&[0.4], &[0.4], &prior, &ls(&[1.0]), &EmbeddingMode::Closed)
            .unwrap();
        assert_relative_eq!(h, 0.577_350_269_2, epsilon = 1e-10);
    }

    #[test]
    fn stable_gap_matches_textbook_a_minus_b_squared() {
        let prior = GaussianPrior::new(vec![0.5, -2.0], vec![1.5, 0.3]).unwrap();
        let terms = ClosedFormTerms::new(&prior, &ls(&[0.8, 0.2])).unwrap();
        let theta = [0.1, -1.7];
        let ts = [1.3, -2.4];
        let mut expo = 0.0;
        for d in 0..2 {
            let (a, b) = terms.ab(d, theta[d], ts[d]);
            assert!(a >= b * b);
            expo += (a - b * b) / (2.0 * terms.s[d].powi(2));
        }
        let scale: f64 = terms.s.iter().zip(prior.stddev()).map(|(s, g)| s / g).product();
        assert_relative_eq!(
            terms.posterior_kernel(&theta, &ts),
            scale * (-expo).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn closed_form_term_invariants() {
        let prior = GaussianPrior::new(vec![0.0; 3], vec![0.5, 2.0, 1.0]).unwrap();
        let beta = ls(&[0.1, 3.0, 1.0]);
        let t = ClosedFormTerms::new(&prior, &beta).unwrap();
        for d in 0..3 {
            assert!(t.nu[d] >= beta.as_slice()[d]);
            let bound = (beta.as_slice()[d] / 2f64.sqrt()).min(prior.stddev()[d]);
            assert!(t.s[d] < bound);
        }
    }

    #[test]
    fn mode_dimension_errors() {
        let prior = GaussianPrior::standard(2).unwrap();
        assert!(prior_embedding(&[0.0], &prior, &ls(&[1.0, 1.0]), &EmbeddingMode::Closed).is_err());
        assert!(prior_embedding(&[0.0, 0.0], &prior, &ls(&[1.0]), &EmbeddingMode::Closed).is_err());
        let set = Arc::new(PriorSampleSet::draw(&GaussianPrior::standard(1).unwrap(), 5, 1).unwrap());
        assert!(PriorEmbedder::new(&prior, &ls(&[1.0, 1.0]), &EmbeddingMode::MonteCarlo(set)).is_err());
    }

    #[test]
    fn prior_sample_set_is_reproducible() {
        let prior = GaussianPrior::new(vec![1.0, 2.0], vec![0.1, 3.0]).unwrap();
        let a = PriorSampleSet::draw(&prior, 50, 9).unwrap();
        let b = PriorSampleSet::draw(&prior, 50, 9).unwrap();
        assert_eq!(a, b);
        assert!(PriorSampleSet::draw(&prior, 0, 9).is_err());
    }
}
