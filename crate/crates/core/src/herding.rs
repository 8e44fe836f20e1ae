//! Kernel herding over a finite candidate set.
//!
//! Given posterior-embedding values `μ_r` at candidates `θ*_r`, each step
//! picks `argmax_r μ_r − a_r/s` and adds `ℓ_β(θ*_r, θ̂_s)` to every
//! accumulator `a_r`. Samples are stored as candidate indices, so repeats
//! are natural.

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMode, GaussianPrior};
use crate::error::{check_dim, Error, Result};
use crate::kernels::{ard_unchecked, LengthScales};
use crate::rng::rng_from_seed;
use crate::surrogate::SurrogateState;

/// Standardized clamp applied to prior draws used as candidates.
pub const CANDIDATE_CLAMP: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateOrigin {
    PriorSamples { seed: u64 },
    Grid,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    points: Vec<Vec<f64>>,
    origin: CandidateOrigin,
}

impl CandidateSet {
    pub fn new(points: Vec<Vec<f64>>, origin: CandidateOrigin) -> Result<Self> {
        let dim = points.first().ok_or(Error::Empty("candidates"))?.len();
        points.iter().try_for_each(|p| check_dim(dim, p.len()))?;
        Ok(Self { points, origin })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn origin(&self) -> &CandidateOrigin {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// `count` prior draws, each standardized coordinate clamped to `±8`.
pub fn candidates_from_prior(prior: &GaussianPrior, count: usize, seed: u64) -> Result<CandidateSet> {
    if count == 0 {
        return Err(Error::Empty("candidates"));
    }
    let mut rng = rng_from_seed(seed);
    let points = (0..count)
        .map(|_| prior.sample_clamped(&mut rng, CANDIDATE_CLAMP))
        .collect();
    CandidateSet::new(points, CandidateOrigin::PriorSamples { seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperSampleSet {
    pub samples: Vec<Vec<f64>>,
    pub indices: Vec<usize>,
    pub objective_trace: Vec<f64>,
    pub kernel_sum: Vec<f64>,
}

impl SuperSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Component-wise mean of the first `s` samples.
    pub fn prefix_mean(&self, s: usize) -> Vec<f64> {
        let s = s.clamp(1, self.len());
        let dim = self.samples[0].len();
        let mut mean = vec![0.0; dim];
        for x in &self.samples[..s] {
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= s as f64);
        mean
    }
}

/// Draws `count` super-samples from the candidates.
pub fn herd(
    embedding_values: &[f64],
    candidates: &CandidateSet,
    beta: &LengthScales,
    count: usize,
) -> Result<SuperSampleSet> {
    check_dim(candidates.len(), embedding_values.len())?;
    check_dim(candidates.dim(), beta.dim())?;
    if count == 0 {
        return Err(Error::InvalidParameter("super-sample count must be >= 1".into()));
    }
    let pts = candidates.points();
    let b = beta.as_slice();
    let mut acc = vec![0.0; pts.len()];
    let mut out = SuperSampleSet {
        samples: Vec::with_capacity(count),
        indices: Vec::with_capacity(count),
        objective_trace: Vec::with_capacity(count),
        kernel_sum: Vec::new(),
    };
    for s in 1..=count {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (r, (mu, a)) in embedding_values.iter().zip(&acc).enumerate() {
            let val = mu - a / s as f64;
            if val > best_val {
                best = r;
                best_val = val;
            }
        }
        let pick = &pts[best];
        for (a, p) in acc.iter_mut().zip(pts) {
            *a += ard_unchecked(p, pick, b);
        }
        out.samples.push(pick.clone());
        out.indices.push(best);
        out.objective_trace.push(best_val);
    }
    out.kernel_sum = acc;
    Ok(out)
}

/// `(1/s²)ΣΣℓ(θ̂_i, θ̂_j) − (2/s)Σμ̃(θ̂_i)` for every prefix `s`. The squared
/// norm of the posterior embedding is a constant and is left out.
pub fn herding_mmd(
    samples: &SuperSampleSet,
    state: &SurrogateState,
    mode: &EmbeddingMode,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Empty("super-samples"));
    }
    let b = state.hyper().beta.as_slice();
    let mut double_sum = 0.0;
    let mut embed_sum = 0.0;
    let mut out = Vec::with_capacity(samples.len());
    for (s, x) in samples.samples.iter().enumerate() {
        check_dim(b.len(), x.len())?;
        let cross: f64 = samples.samples[..s]
            .iter()
            .map(|y| ard_unchecked(x, y, b))
            .sum();
        double_sum += 2.0 * cross + 1.0;
        embed_sum += state.kmpe_with(x, mode)?;
        let n = (s + 1) as f64;
        out.push(double_sum / (n * n) - 2.0 * embed_sum / n);
    }
    Ok(out)
}
