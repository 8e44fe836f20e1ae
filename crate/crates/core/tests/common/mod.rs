#![allow(dead_code)]

use kelfi_core::rng::Rng;
use kelfi_core::SimulationSet;
use rand::Rng as _;
use rand_distr::StandardNormal;

/// Composite trapezoid rule with `n` intervals.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut acc = 0.5 * (f(lo) + f(hi));
    for i in 1..n {
        acc += f(lo + i as f64 * h);
    }
    acc * h
}

/// 2-D tensor trapezoid rule.
pub fn trapezoid_2d(f: impl Fn(f64, f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let w = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
    let mut acc = 0.0;
    for i in 0..=n {
        let x = lo + i as f64 * h;
        for j in 0..=n {
            acc += w(i) * w(j) * f(x, lo + j as f64 * h);
        }
    }
    acc * h * h
}

pub fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// `m` standard-normal parameters with summaries `x = Aθ + noise`.
pub fn linear_gaussian_sims(rng: &mut Rng, m: usize, d: usize, n: usize, noise: f64) -> SimulationSet {
    let a: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| normal(rng)).collect()).collect();
    let thetas: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| normal(rng)).collect()).collect();
    let summaries = thetas
        .iter()
        .map(|t| {
            a.iter()
                .map(|row| row.iter().zip(t).map(|(r, x)| r * x).sum::<f64>() + noise * normal(rng))
                .collect()
        })
        .collect();
    SimulationSet::new(thetas, summaries, "standard_normal").unwrap()
}
