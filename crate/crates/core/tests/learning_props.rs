mod common;

use common::{linear_gaussian_sims, normal, uniform};
use kelfi_core::learning::{learn_ard_eps, learn_scales, mkml_objective, mkml_surface, LearningConfig};
use kelfi_core::rng::rng_from_seed;
use kelfi_core::{GaussianPrior, Hyperparameters, LengthScales, ModelOptions, SimulationSet};
use proptest::prelude::*;

fn problem(seed: u64, m: usize) -> (SimulationSet, Vec<f64>, GaussianPrior) {
    let mut rng = rng_from_seed(seed);
    let sims = linear_gaussian_sims(&mut rng, m, 1, 1, 0.3);
    (sims, vec![0.5], GaussianPrior::standard(1).unwrap())
}

fn config() -> LearningConfig {
    LearningConfig {
        eps_log_range: (-2.0, 1.0),
        beta0_log_range: (-2.0, 1.0),
        grid_points: 9,
        local_steps: 3,
        step_tolerance: 1e-3,
        lambda_override: None,
    }
}

#[test]
fn learning_is_deterministic_and_not_below_grid() {
    let (sims, y, prior) = problem(1, 80);
    let opts = ModelOptions::default();
    let a = learn_scales(&sims, &y, &prior, &config(), &opts).unwrap();
    let b = learn_scales(&sims, &y, &prior, &config(), &opts).unwrap();
    assert_eq!(a, b);
    let grid_max = a
        .surface
        .values
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.grid_best, grid_max);
    assert!(a.objective >= grid_max);
    let direct = mkml_objective(&sims, &y, &prior, &a.hyper.eps, a.hyper.beta0, &opts);
    assert!((direct - a.objective).abs() <= 1e-9 * direct.abs());
}

#[test]
fn surface_argmax_matches_learning_grid() {
    let (sims, y, prior) = problem(2, 60);
    let cfg = config();
    let opts = ModelOptions::default();
    let learned = learn_scales(&sims, &y, &prior, &cfg, &opts).unwrap();
    let surface = mkml_surface(&sims, &y, &prior, &cfg.eps_grid(), &cfg.beta0_grid(), &opts).unwrap();
    assert_eq!(surface, learned.surface);
    let (i, j, _) = surface.argmax().unwrap();
    assert_eq!((surface.eps[i], surface.beta0[j]), learned.grid_argmax);
}

#[test]
fn objective_vanishes_for_huge_beta0() {
    let (sims, y, prior) = problem(3, 60);
    let eps = LengthScales::new(vec![0.5]).unwrap();
    let opts = ModelOptions::default();
    let base = mkml_objective(&sims, &y, &prior, &eps, 0.5, &opts);
    let far = mkml_objective(&sims, &y, &prior, &eps, 1e6, &opts);
    let farther = mkml_objective(&sims, &y, &prior, &eps, 1e7, &opts);
    assert!(base > 0.0);
    // λ = 10⁻³β₀ grows with β₀ while μ_Θ stays bounded, so q(y) = O(1/β₀).
    assert!(far.abs() < 1e-2 * base, "{far} vs {base}");
    assert!((farther / far - 0.1).abs() < 0.01, "{farther} vs {far}");
}

#[test]
fn objective_is_differentiable() {
    let (sims, y, prior) = problem(4, 60);
    let opts = ModelOptions::default();
    let mut rng = rng_from_seed(9);
    let f = |le: f64, lb: f64| {
        mkml_objective(&sims, &y, &prior, &LengthScales::new(vec![10f64.powf(le)]).unwrap(), 10f64.powf(lb), &opts)
    };
    let mut checked = 0;
    while checked < 20 {
        let le = uniform(&mut rng, -1.0, 0.5);
        let lb = uniform(&mut rng, -1.0, 0.5);
        for axis in 0..2 {
            let grad = |h: f64| {
                if axis == 0 {
                    (f(le + h, lb) - f(le - h, lb)) / (2.0 * h)
                } else {
                    (f(le, lb + h) - f(le, lb - h)) / (2.0 * h)
                }
            };
            let (g1, g2) = (grad(1e-3), grad(1e-4));
            if g2.abs() < 1e-6 * f(le, lb).abs() {
                continue;
            }
            assert!((g1 / g2 - 1.0).abs() < 0.05, "({le}, {lb}) axis {axis}: {g1} vs {g2}");
        }
        checked += 1;
    }
}

#[test]
fn ard_is_monotone_and_matches_direct_objective() {
    let mut rng = rng_from_seed(5);
    let m = 100;
    let thetas: Vec<Vec<f64>> = (0..m).map(|_| vec![normal(&mut rng)]).collect();
    let summaries: Vec<Vec<f64>> = thetas
        .iter()
        .map(|t| vec![t[0] + 0.2 * normal(&mut rng), normal(&mut rng)])
        .collect();
    let sims = SimulationSet::new(thetas, summaries, "standard_normal").unwrap();
    let prior = GaussianPrior::standard(1).unwrap();
    let y = vec![0.7, 0.3];
    let opts = ModelOptions::default();
    let iso = learn_scales(&sims, &y, &prior, &config(), &opts).unwrap();
    let ard = learn_ard_eps(&sims, &y, &prior, &iso.hyper, 5, &opts).unwrap();
    assert!((ard.start_objective - iso.objective).abs() <= 1e-9 * iso.objective);
    assert!(ard.objective >= ard.start_objective);
    assert_eq!(ard.hyper.eps.dim(), 2);
    let direct = mkml_objective(&sims, &y, &prior, &ard.hyper.eps, ard.hyper.beta0, &opts);
    assert!((direct - ard.objective).abs() <= 1e-9 * direct);
}

#[test]
fn untied_lambda_override_is_respected() {
    let (sims, y, prior) = problem(6, 40);
    let cfg = LearningConfig {
        lambda_override: Some(0.05),
        ..config()
    };
    let learned = learn_scales(&sims, &y, &prior, &cfg, &ModelOptions::default()).unwrap();
    assert_eq!(learned.hyper.lambda, 0.05);
    assert!(!learned.hyper.tie_lambda);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ard_never_decreases_objective(seed in 0u64..1000, le0 in -1.5f64..0.5, le1 in -1.5f64..0.5, beta0 in 0.1f64..2.0) {
        let mut rng = rng_from_seed(seed);
        let sims = linear_gaussian_sims(&mut rng, 30, 1, 2, 0.5);
        let prior = GaussianPrior::standard(1).unwrap();
        let start = Hyperparameters::tied(
            LengthScales::new(vec![10f64.powf(le0), 10f64.powf(le1)]).unwrap(),
            beta0,
            prior.stddev(),
        ).unwrap();
        let out = learn_ard_eps(&sims, &[0.1, -0.2], &prior, &start, 2, &ModelOptions::default()).unwrap();
        prop_assert!(out.objective >= out.start_objective);
    }
}
