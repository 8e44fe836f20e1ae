//! The fitted surrogate: kernel means likelihood (KML), its marginal (MKML),
//! the kernel means posterior (KMP) and the posterior mean embedding (KMPE).
//!
//! Given simulations `{θ_j, x_j}` and an observation `y`,
//!
//! ```text
//! v      = (L + mλI)⁻¹ κ_ε(y)
//! KML    q(y|θ)  = Σ_j v_j ℓ(θ_j, θ)
//! MKML   q(y)    = Σ_j v_j μ_Θ(θ_j)
//! KMP    q(θ|y)  = q(y|θ) p(θ) / q(y)
//! KMPE   μ̃(θ*)   = Σ_j v_j h(θ_j, θ*) / q(y)
//! ```
//!
//! Negative KML/KMP values are legitimate at finite `m` and are never
//! clipped. A non-positive `q(y)` makes the posterior undefined, so every
//! posterior query refuses with [`Error::NonPositiveEvidence`].

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMode, GaussianPrior, PriorEmbedder};
use crate::error::{check_dim, Error, Result};
use crate::kernels::{
    ard_unchecked, Discrepancies, EpsKernelKind, GramMatrix, LengthScales, RegularizedSolver,
};
use crate::rng::Rng;

/// Paired parameter/summary draws from `p(x|θ) π(θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSet {
    thetas: Vec<Vec<f64>>,
    summaries: Vec<Vec<f64>>,
    proposal_tag: String,
}

impl SimulationSet {
    pub fn new(
        thetas: Vec<Vec<f64>>,
        summaries: Vec<Vec<f64>>,
        proposal_tag: impl Into<String>,
    ) -> Result<Self> {
        check_dim(thetas.len(), summaries.len())?;
        let d = thetas.first().ok_or(Error::Empty("simulations"))?.len();
        let n = summaries[0].len();
        if d == 0 || n == 0 {
            return Err(Error::Empty("parameter or summary vector"));
        }
        for (t, x) in thetas.iter().zip(&summaries) {
            check_dim(d, t.len())?;
            check_dim(n, x.len())?;
            if t.iter().chain(x).any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite simulation entry".into()));
            }
        }
        Ok(Self {
            thetas,
            summaries,
            proposal_tag: proposal_tag.into(),
        })
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn summaries(&self) -> &[Vec<f64>] {
        &self.summaries
    }

    pub fn proposal_tag(&self) -> &str {
        &self.proposal_tag
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn param_dim(&self) -> usize {
        self.thetas[0].len()
    }

    pub fn summary_dim(&self) -> usize {
        self.summaries[0].len()
    }

    /// The first `m` simulations.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.len() {
            return Err(Error::InvalidParameter(format!(
                "prefix {m} out of range 1..={}",
                self.len()
            )));
        }
        Ok(Self {
            thetas: self.thetas[..m].to_vec(),
            summaries: self.summaries[..m].to_vec(),
            proposal_tag: self.proposal_tag.clone(),
        })
    }
}

/// Ratio tying the regularizer to the parameter-kernel scale, `λ = 10⁻³ β₀`.
pub const LAMBDA_PER_BETA0: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub eps: LengthScales,
    pub beta0: f64,
    pub beta: LengthScales,
    pub lambda: f64,
    pub tie_beta: bool,
    pub tie_lambda: bool,
}

impl Hyperparameters {
    /// `β = β₀σ` and `λ = 10⁻³β₀`.
    pub fn tied(eps: LengthScales, beta0: f64, prior_stddev: &[f64]) -> Result<Self> {
        if !(beta0.is_finite() && beta0 > 0.0) {
            return Err(Error::InvalidScale(beta0));
        }
        let beta = LengthScales::new(prior_stddev.iter().map(|s| beta0 * s).collect())?;
        Ok(Self {
            eps,
            beta0,
            beta,
            lambda: LAMBDA_PER_BETA0 * beta0,
            tie_beta: true,
            tie_lambda: true,
        })
    }

    /// Free `β` and `λ`; `beta0` is recorded as 1.
    pub fn untied(eps: LengthScales, beta: LengthScales, lambda: f64) -> Result<Self> {
        let h = Self {
            eps,
            beta0: 1.0,
            beta,
            lambda,
            tie_beta: false,
            tie_lambda: false,
        };
        h.check_lambda()?;
        Ok(h)
    }

    /// Replaces the tied regularizer with a fixed value.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.tie_lambda = false;
        self.check_lambda()?;
        Ok(self)
    }

    pub fn with_eps(mut self, eps: LengthScales) -> Self {
        self.eps = eps;
        self
    }

    fn check_lambda(&self) -> Result<()> {
        if self.lambda.is_finite() && self.lambda > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("lambda = {} must be > 0", self.lambda)))
        }
    }

    /// Checks the tie invariants against the prior scales.
    pub fn validate(&self, prior: &GaussianPrior) -> Result<()> {
        check_dim(prior.dim(), self.beta.dim())?;
        self.check_lambda()?;
        if self.tie_beta {
            for (b, s) in self.beta.as_slice().iter().zip(prior.stddev()) {
                if *b != self.beta0 * s {
                    return Err(Error::InvalidParameter("beta is not beta0 * sigma".into()));
                }
            }
        }
        if self.tie_lambda && self.lambda != LAMBDA_PER_BETA0 * self.beta0 {
            return Err(Error::InvalidParameter("lambda is not 1e-3 * beta0".into()));
        }
        Ok(())
    }
}

/// Model choices that are not learned.
#[derive(Debug, Clone, Default)]
pub struct ModelOptions {
    pub eps_kernel: EpsKernelKind,
    pub embedding: EmbeddingMode,
}

/// Best point found by [`SurrogateState::kmp_mode`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModeEstimate {
    pub point: Vec<f64>,
    pub density: f64,
}

#[derive(Debug, Clone)]
pub struct SurrogateState {
    sims: SimulationSet,
    observed: Vec<f64>,
    hyper: Hyperparameters,
    prior: GaussianPrior,
    options: ModelOptions,
    solver: RegularizedSolver,
    embedder: PriorEmbedder,
    kappa: Vec<f64>,
    v: Vec<f64>,
    prior_embed: Vec<f64>,
    q: f64,
}

impl SurrogateState {
    pub fn fit(
        sims: &SimulationSet,
        observed: &[f64],
        hyper: &Hyperparameters,
        prior: &GaussianPrior,
        options: &ModelOptions,
    ) -> Result<Self> {
        check_dim(sims.param_dim(), prior.dim())?;
        hyper.validate(prior)?;
        let table = Discrepancies::new(options.eps_kernel, observed, sims.summaries())?;
        let kappa = table.kernel_vector(&hyper.eps)?;
        let gram = GramMatrix::new(sims.thetas(), &hyper.beta)?;
        let solver = RegularizedSolver::new(&gram, hyper.lambda)?;
        let v = solver.solve(&kappa)?;
        let embedder = PriorEmbedder::new(prior, &hyper.beta, &options.embedding)?;
        let prior_embed = sims
            .thetas()
            .iter()
            .map(|t| embedder.prior_embedding(t))
            .collect::<Result<Vec<_>>>()?;
        let q = dot(&v, &prior_embed);
        Ok(Self {
            sims: sims.clone(),
            observed: observed.to_vec(),
            hyper: hyper.clone(),
            prior: prior.clone(),
            options: options.clone(),
            solver,
            embedder,
            kappa,
            v,
            prior_embed,
            q,
        })
    }

    pub fn sims(&self) -> &SimulationSet {
        &self.sims
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn options(&self) -> &ModelOptions {
        &self.options
    }

    pub fn weights(&self) -> &[f64] {
        &self.v
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn prior_embedding_cache(&self) -> &[f64] {
        &self.prior_embed
    }

    /// `‖(L + mλI)v − κ_ε(y)‖∞`.
    pub fn residual(&self) -> f64 {
        self.solver.residual(&self.v, &self.kappa)
    }

    /// Marginal surrogate likelihood `q(y)`.
    pub fn mkml(&self) -> f64 {
        self.q
    }

    pub fn evidence_ok(&self) -> bool {
        self.q > 0.0 && self.q.is_finite()
    }

    fn require_evidence(&self) -> Result<f64> {
        if self.evidence_ok() {
            Ok(self.q)
        } else {
            Err(Error::NonPositiveEvidence(self.q))
        }
    }

    pub fn kml(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.prior.dim(), theta.len())?;
        let b = self.hyper.beta.as_slice();
        Ok(self
            .sims
            .thetas()
            .iter()
            .zip(&self.v)
            .map(|(t, v)| v * ard_unchecked(t, theta, b))
            .sum())
    }

    fn kml_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let b = self.hyper.beta.as_slice();
        let mut value = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for (t, v) in self.sims.thetas().iter().zip(&self.v) {
            let w = v * ard_unchecked(t, theta, b);
            value += w;
            for d in 0..theta.len() {
                grad[d] += w * (t[d] - theta[d]) / (b[d] * b[d]);
            }
        }
        (value, grad)
    }

    /// Surrogate posterior density; refuses when `q(y) ≤ 0`.
    pub fn kmp(&self, theta: &[f64]) -> Result<f64> {
        let q = self.require_evidence()?;
        Ok(self.kml(theta)? * self.prior.density(theta)? / q)
    }

    /// Posterior mean embedding at `θ*` using the state's embedding mode.
    pub fn kmpe(&self, theta_star: &[f64]) -> Result<f64> {
        let q = self.require_evidence()?;
        self.kmpe_inner(&self.embedder, theta_star, q)
    }

    /// Posterior mean embedding with an explicit `h` mode.
    pub fn kmpe_with(&self, theta_star: &[f64], mode: &EmbeddingMode) -> Result<f64> {
        let q = self.require_evidence()?;
        let embedder = PriorEmbedder::new(&self.prior, &self.hyper.beta, mode)?;
        self.kmpe_inner(&embedder, theta_star, q)
    }

    fn kmpe_inner(&self, embedder: &PriorEmbedder, theta_star: &[f64], q: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (t, v) in self.sims.thetas().iter().zip(&self.v) {
            acc += v * embedder.posterior_kernel(t, theta_star)?;
        }
        Ok(acc / q)
    }

    /// `Hᵀv / q(y)` over a candidate set.
    pub fn posterior_embedding(&self, candidates: &[Vec<f64>]) -> Result<Vec<f64>> {
        let q = self.require_evidence()?;
        candidates
            .iter()
            .map(|c| self.kmpe_inner(&self.embedder, c, q))
            .collect()
    }

    /// Number of points where the KML is negative.
    pub fn count_negative_kml(&self, points: &[Vec<f64>]) -> Result<usize> {
        let mut n = 0;
        for p in points {
            if self.kml(p)? < 0.0 {
                n += 1;
            }
        }
        Ok(n)
    }

    /// `kml(θ)·p(θ)`, the unnormalized KMP, with its gradient.
    fn joint_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (k, gk) = self.kml_and_gradient(theta);
        let p = self.prior.density(theta).unwrap_or(0.0);
        let mut g = gk;
        for (d, gd) in g.iter_mut().enumerate() {
            let s = self.prior.stddev()[d];
            let dp = -p * (theta[d] - self.prior.mean()[d]) / (s * s);
            *gd = *gd * p + k * dp;
        }
        (k * p, g)
    }

    fn joint(&self, theta: &[f64]) -> f64 {
        self.kml(theta).unwrap_or(f64::NAN) * self.prior.density(theta).unwrap_or(0.0)
    }

    /// Monotone gradient ascent on `kml·p` from one start, with steps
    /// preconditioned by `β²` and halved until the value increases.
    fn ascend(&self, start: &[f64]) -> (Vec<f64>, f64) {
        let b = self.hyper.beta.as_slice();
        let mut x = start.to_vec();
        let mut fx = self.joint(&x);
        let mut step: f64 = 1.0;
        for _ in 0..2000 {
            let (_, g) = self.joint_and_gradient(&x);
            let mut dir: Vec<f64> = g.iter().zip(b).map(|(g, b)| g * b * b).collect();
            let norm = dir
                .iter()
                .zip(b)
                .map(|(d, b)| (d / b).abs())
                .fold(0.0, f64::max);
            if !(norm > 0.0 && norm.is_finite()) {
                break;
            }
            dir.iter_mut().for_each(|d| *d /= norm);
            step = (2.0 * step).min(1.0);
            let mut moved = false;
            while step > 1e-12 {
                let cand: Vec<f64> = x.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
                let fc = self.joint(&cand);
                if fc > fx {
                    x = cand;
                    fx = fc;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        (x, fx)
    }

    /// Posterior mode by multi-start ascent from `restarts` prior draws.
    pub fn kmp_mode(&self, restarts: usize, seed: u64) -> Result<ModeEstimate> {
        let mut rng = Rng::seed_from_u64(seed);
        let starts: Vec<Vec<f64>> = (0..restarts.max(1))
            .map(|_| self.prior.sample(&mut rng))
            .collect();
        self.kmp_mode_from(&starts)
    }

    /// Posterior mode by ascent from the given starting points.
    pub fn kmp_mode_from(&self, starts: &[Vec<f64>]) -> Result<ModeEstimate> {
        let q = self.require_evidence()?;
        let mut best: Option<(Vec<f64>, f64)> = None;
        for s in starts {
            check_dim(self.prior.dim(), s.len())?;
            let (x, fx) = self.ascend(s);
            if best.as_ref().is_none_or(|(_, fb)| fx > *fb) {
                best = Some((x, fx));
            }
        }
        let (point, f) = best.ok_or(Error::Empty("mode starting points"))?;
        Ok(ModeEstimate {
            point,
            density: f / q,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::EpsKernelSpec;
    use approx::assert_relative_eq;

    fn ls(v: &[f64]) -> LengthScales {
        LengthScales::new(v.to_vec()).unwrap()
    }

    fn linear_gaussian_sims(m: usize) -> SimulationSet {
        let thetas: Vec<Vec<f64>> = (0..m).map(|j| vec![-2.0 + 4.0 * j as f64 / (m - 1) as f64]).collect();
        let summaries = thetas.iter().map(|t| vec![t[0] + 0.1 * (t[0] * 7.0).sin()]).collect();
        SimulationSet::new(thetas, summaries, "grid").unwrap()
    }

    #[test]
    fn single_simulation_algebra() {
        let sims = SimulationSet::new(vec![vec![0.2]], vec![vec![0.5]], "one").unwrap();
        let prior = GaussianPrior::standard(1).unwrap();
        let hyper = Hyperparameters::tied(ls(&[0.3]), 0.8, prior.stddev()).unwrap();
        let s = SurrogateState::fit(&sims, &[0.5], &hyper, &prior, &ModelOptions::default()).unwrap();
        let kappa = EpsKernelSpec::pointwise(ls(&[0.3])).evaluate(&[0.5], &[0.5]).unwrap();
        assert_relative_eq!(s.weights()[0], kappa / (1.0 + hyper.lambda), max_relative = 1e-14);
        assert_eq!(s.mkml(), s.weights()[0] * s.prior_embedding_cache()[0]);
        let hstar = crate::embedding::posterior_embedding_kernel(
            &[0.2], &[1.0], &prior, &hyper.beta, &EmbeddingMode::Closed,
        )
        .unwrap();
        assert_relative_eq!(
            s.kmpe(&[1.0]).unwrap(),
            hstar / s.prior_embedding_cache()[0],
            max_relative = 1e-12
        );
    }

    #[test]
    fn residual_contract() {
        let sims = linear_gaussian_sims(40);
        let prior = GaussianPrior::standard(1).unwrap();
        let hyper = Hyperparameters::tied(ls(&[0.2]), 0.3, prior.stddev()).unwrap();
        let s = SurrogateState::fit(&sims, &[0.1], &hyper, &prior, &ModelOptions::default()).unwrap();
        let scale = s.kappa().iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(s.residual() <= 1e-8 * scale);
        assert!(s.evidence_ok());
    }

    #[test]
    fn zero_weights_give_zero_kml_and_refusal() {
        // observation so far away every ε-kernel entry underflows
        let sims = linear_gaussian_sims(10);
        let prior = GaussianPrior::standard(1).unwrap();
        let hyper = Hyperparameters::tied(ls(&[0.01]), 0.5, prior.stddev()).unwrap();
        let s = SurrogateState::fit(&sims, &[1e6], &hyper, &prior, &ModelOptions::default()).unwrap();
        assert!(s.weights().iter().all(|v| *v == 0.0));
        assert_eq!(s.kml(&[0.3]).unwrap(), 0.0);
        assert!(matches!(s.kmp(&[0.0]), Err(Error::NonPositiveEvidence(_))));
        assert!(matches!(s.kmpe(&[0.0]), Err(Error::NonPositiveEvidence(_))));
        assert!(matches!(s.kmp_mode(2, 1), Err(Error::NonPositiveEvidence(_))));
    }

    #[test]
    fn far_tail_kmp_vanishes() {
        let sims = linear_gaussian_sims(30);
        let prior = GaussianPrior::standard(1).unwrap();
        let hyper = Hyperparameters::tied(ls(&[0.3]), 0.5, prior.stddev()).unwrap();
        let s = SurrogateState::fit(&sims, &[0.2], &hyper, &prior, &ModelOptions::default()).unwrap();
        assert!(s.kmp(&[10.0]).unwrap().abs() < 1e-20);
        assert!(s.kmp(&[0.2]).unwrap() > 0.1);
    }

    #[test]
    fn tie_validation() {
        let prior = GaussianPrior::new(vec![0.0, 0.0], vec![2.0, 0.5]).unwrap();
        let h = Hyperparameters::tied(ls(&[1.0]), 0.4, prior.stddev()).unwrap();
        assert_eq!(h.beta.as_slice(), &[0.8, 0.2]);
        assert_eq!(h.lambda, 4e-4);
        h.validate(&prior).unwrap();
        let mut broken = h.clone();
        broken.lambda = 0.1;
        assert!(broken.validate(&prior).is_err());
        let untied = h.with_lambda(0.1).unwrap();
        untied.validate(&prior).unwrap();
        assert!(Hyperparameters::untied(ls(&[1.0]), ls(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn simulation_set_validation() {
        assert!(SimulationSet::new(vec![], vec![], "x").is_err());
        assert!(SimulationSet::new(vec![vec![0.0]], vec![vec![0.0], vec![1.0]], "x").is_err());
        assert!(SimulationSet::new(vec![vec![0.0]], vec![vec![f64::NAN]], "x").is_err());
        let s = linear_gaussian_sims(5);
        assert_eq!(s.prefix(3).unwrap().len(), 3);
        assert!(s.prefix(0).is_err());
        assert!(s.prefix(6).is_err());
    }

    #[test]
    fn mode_ascent_cannot_decrease() {
        let sims = linear_gaussian_sims(30);
        let prior = GaussianPrior::standard(1).unwrap();
        let hyper = Hyperparameters::tied(ls(&[0.3]), 0.5, prior.stddev()).unwrap();
        let s = SurrogateState::fit(&sims, &[0.7], &hyper, &prior, &ModelOptions::default()).unwrap();
        let start = vec![0.0];
        let m = s.kmp_mode_from(&[start.clone()]).unwrap();
        assert!(m.density >= s.kmp(&start).unwrap());
    }
}
