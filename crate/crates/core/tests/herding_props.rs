mod common;

use common::{linear_gaussian_sims, uniform};
use kelfi_core::embedding::EmbeddingMode;
use kelfi_core::herding::{herd, herding_mmd, CandidateOrigin, CandidateSet, SuperSampleSet};
use kelfi_core::kernels::ard_gaussian;
use kelfi_core::rng::rng_from_seed;
use kelfi_core::{candidates_from_prior, GaussianPrior, Hyperparameters, LengthScales, ModelOptions, SurrogateState};
use proptest::prelude::*;

fn state() -> SurrogateState {
    let mut rng = rng_from_seed(2);
    let sims = linear_gaussian_sims(&mut rng, 60, 1, 1, 0.3);
    let prior = GaussianPrior::standard(1).unwrap();
    let hyper = Hyperparameters::tied(LengthScales::new(vec![0.4]).unwrap(), 0.5, prior.stddev()).unwrap();
    SurrogateState::fit(&sims, &[0.5], &hyper, &prior, &ModelOptions::default()).unwrap()
}

fn manual(points: Vec<Vec<f64>>) -> SuperSampleSet {
    let n = points.len();
    SuperSampleSet {
        samples: points,
        indices: (0..n).collect(),
        objective_trace: vec![0.0; n],
        kernel_sum: vec![],
    }
}

#[test]
fn single_sample_mmd_expansion() {
    let s = state();
    let cands = candidates_from_prior(s.prior(), 500, 1).unwrap();
    let mu = s.posterior_embedding(cands.points()).unwrap();
    let out = herd(&mu, &cands, &s.hyper().beta, 1).unwrap();
    let max_mu = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mmd = herding_mmd(&out, &s, &EmbeddingMode::Closed).unwrap();
    assert!((mmd[0] - (1.0 - 2.0 * max_mu)).abs() < 1e-12);
}

#[test]
fn duplicate_samples_do_not_change_mmd() {
    let s = state();
    let once = herding_mmd(&manual(vec![vec![0.3]]), &s, &EmbeddingMode::Closed).unwrap();
    let twice = herding_mmd(&manual(vec![vec![0.3], vec![0.3]]), &s, &EmbeddingMode::Closed).unwrap();
    assert!((once[0] - twice[1]).abs() < 1e-14);
}

#[test]
fn mmd_matches_direct_formula() {
    let s = state();
    let pts = vec![vec![-0.4], vec![0.9], vec![0.2]];
    let beta = s.hyper().beta.clone();
    let mmd = herding_mmd(&manual(pts.clone()), &s, &EmbeddingMode::Closed).unwrap();
    let n = pts.len() as f64;
    let mut dbl = 0.0;
    for a in &pts {
        for b in &pts {
            dbl += ard_gaussian(a, b, &beta).unwrap();
        }
    }
    let emb: f64 = pts.iter().map(|p| s.kmpe(p).unwrap()).sum();
    assert!((mmd[2] - (dbl / (n * n) - 2.0 * emb / n)).abs() < 1e-12);
}

#[test]
fn herding_mmd_decreases() {
    let s = state();
    let cands = candidates_from_prior(s.prior(), 2000, 3).unwrap();
    let mu = s.posterior_embedding(cands.points()).unwrap();
    let out = herd(&mu, &cands, &s.hyper().beta, 200).unwrap();
    let mmd = herding_mmd(&out, &s, &EmbeddingMode::Closed).unwrap();
    assert!(mmd[199] < mmd[9]);
    assert_eq!(out.objective_trace.len(), 200);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn permutation_only_relabels(seed in 0u64..10_000) {
        let mut rng = rng_from_seed(seed);
        let r = 40;
        let pts: Vec<Vec<f64>> = (0..r).map(|_| vec![uniform(&mut rng, -3.0, 3.0)]).collect();
        let mu: Vec<f64> = (0..r).map(|_| uniform(&mut rng, 0.0, 1.0)).collect();
        let beta = LengthScales::new(vec![0.5]).unwrap();
        let a = herd(&mu, &CandidateSet::new(pts.clone(), CandidateOrigin::User).unwrap(), &beta, 15).unwrap();
        let perm: Vec<usize> = (0..r).rev().collect();
        let pts_p: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
        let mu_p: Vec<f64> = perm.iter().map(|&i| mu[i]).collect();
        let b = herd(&mu_p, &CandidateSet::new(pts_p, CandidateOrigin::User).unwrap(), &beta, 15).unwrap();
        prop_assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn samples_are_candidates(seed in 0u64..10_000, count in 1usize..30) {
        let mut rng = rng_from_seed(seed);
        let pts: Vec<Vec<f64>> = (0..10).map(|_| vec![uniform(&mut rng, -3.0, 3.0), uniform(&mut rng, -1.0, 1.0)]).collect();
        let mu: Vec<f64> = (0..10).map(|_| uniform(&mut rng, 0.0, 1.0)).collect();
        let cands = CandidateSet::new(pts, CandidateOrigin::User).unwrap();
        let out = herd(&mu, &cands, &LengthScales::new(vec![0.5, 0.5]).unwrap(), count).unwrap();
        prop_assert_eq!(out.samples.len(), count);
        for (s, &i) in out.samples.iter().zip(&out.indices) {
            prop_assert_eq!(s, &cands.points()[i]);
        }
    }
}
