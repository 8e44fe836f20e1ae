mod common;

use common::{normal, trapezoid, uniform};
use kelfi_core::embedding::{posterior_embedding_kernel, prior_embedding, EmbeddingMode};
use kelfi_core::kernels::ard_gaussian;
use kelfi_core::rng::rng_from_seed;
use kelfi_core::{GaussianPrior, LengthScales, PriorSampleSet};
use std::sync::Arc;

struct Config {
    prior: GaussianPrior,
    beta: LengthScales,
    theta: f64,
    theta_star: f64,
}

fn configs(seed: u64, count: usize) -> Vec<Config> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| {
            let mu = 2.0 * normal(&mut rng);
            let sigma = 10f64.powf(uniform(&mut rng, -1.0, 0.7));
            Config {
                prior: GaussianPrior::new(vec![mu], vec![sigma]).unwrap(),
                beta: LengthScales::new(vec![10f64.powf(uniform(&mut rng, -1.0, 0.7))]).unwrap(),
                theta: mu + 2.0 * sigma * normal(&mut rng),
                theta_star: mu + 2.0 * sigma * normal(&mut rng),
            }
        })
        .collect()
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

#[test]
fn closed_forms_match_quadrature() {
    for c in configs(21, 50) {
        let (mu, s) = (c.prior.mean()[0], c.prior.stddev()[0]);
        let (lo, hi) = (mu - 10.0 * s, mu + 10.0 * s);
        let k = |a: f64, b: f64| ard_gaussian(&[a], &[b], &c.beta).unwrap();
        let mu_quad = trapezoid(|t| k(c.theta, t) * normal_pdf(t, mu, s), lo, hi, 100_000);
        let h_quad = trapezoid(|t| k(c.theta, t) * k(t, c.theta_star) * normal_pdf(t, mu, s), lo, hi, 100_000);
        let mu_closed = prior_embedding(&[c.theta], &c.prior, &c.beta, &EmbeddingMode::Closed).unwrap();
        let h_closed =
            posterior_embedding_kernel(&[c.theta], &[c.theta_star], &c.prior, &c.beta, &EmbeddingMode::Closed).unwrap();
        assert!((mu_quad - mu_closed).abs() < 1e-6, "{mu_quad} {mu_closed}");
        assert!((h_quad - h_closed).abs() < 1e-6, "{h_quad} {h_closed}");
    }
}

#[test]
fn closed_forms_match_monte_carlo() {
    let t = 100_000;
    for (i, c) in configs(22, 10).into_iter().enumerate() {
        let set = Arc::new(PriorSampleSet::draw(&c.prior, t, i as u64).unwrap());
        let k = |a: f64, b: f64| ard_gaussian(&[a], &[b], &c.beta).unwrap();
        let g: Vec<f64> = set.samples().iter().map(|s| k(c.theta, s[0]) * k(s[0], c.theta_star)).collect();
        let mean = g.iter().sum::<f64>() / t as f64;
        let se = (g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1) as f64 / t as f64).sqrt();
        let mc = posterior_embedding_kernel(
            &[c.theta],
            &[c.theta_star],
            &c.prior,
            &c.beta,
            &EmbeddingMode::MonteCarlo(set.clone()),
        )
        .unwrap();
        assert!((mc - mean).abs() < 1e-12);
        let closed =
            posterior_embedding_kernel(&[c.theta], &[c.theta_star], &c.prior, &c.beta, &EmbeddingMode::Closed).unwrap();
        assert!((closed - mc).abs() <= 3.0 * se + 1e-15, "config {i}");
    }
}

#[test]
fn multivariate_closed_form_is_product_of_marginals() {
    let prior = GaussianPrior::new(vec![0.5, -1.0], vec![0.8, 2.0]).unwrap();
    let beta = LengthScales::new(vec![0.4, 1.3]).unwrap();
    let a = [0.1, 0.2];
    let b = [-0.7, 1.1];
    let joint = posterior_embedding_kernel(&a, &b, &prior, &beta, &EmbeddingMode::Closed).unwrap();
    let mut product = 1.0;
    for d in 0..2 {
        let p = GaussianPrior::new(vec![prior.mean()[d]], vec![prior.stddev()[d]]).unwrap();
        let bd = LengthScales::new(vec![beta.as_slice()[d]]).unwrap();
        product *= posterior_embedding_kernel(&[a[d]], &[b[d]], &p, &bd, &EmbeddingMode::Closed).unwrap();
    }
    assert!((joint - product).abs() < 1e-15);
}
