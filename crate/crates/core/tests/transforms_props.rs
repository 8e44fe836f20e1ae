mod common;

use common::{trapezoid, uniform};
use kelfi_core::rng::rng_from_seed;
use kelfi_core::transforms::{change_of_variables, std_normal_pdf, Marginal, MarginalSpec, MarginalTransform};
use proptest::prelude::*;

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn families() -> Vec<MarginalSpec> {
    let x: Vec<f64> = (0..=40).map(|k| k as f64 / 40.0).collect();
    let cdf = x.iter().map(|t| 3.0 * t * t - 2.0 * t * t * t).collect();
    vec![
        MarginalSpec::Uniform { lo: -2.0, hi: 3.0 },
        MarginalSpec::LogUniform { lo: 0.01, hi: 100.0 },
        MarginalSpec::Gaussian { mean: 1.0, stddev: 0.3 },
        MarginalSpec::Gamma { shape: 2.0, rate: 2.0 },
        MarginalSpec::Tabulated { x, cdf },
    ]
}

#[test]
fn pushforward_passes_ks() {
    let n = 100_000;
    let critical = (-(1e-3f64 / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt();
    for (k, spec) in families().into_iter().enumerate() {
        let t = MarginalTransform::new(vec![spec]).unwrap();
        let mut rng = rng_from_seed(k as u64);
        let xs: Vec<f64> = (0..n).map(|_| t.sample(&mut rng).unwrap()[0]).collect();
        let m = &t.marginals()[0];
        let d = ks_statistic(xs, |x| m.cdf(x));
        assert!(d < critical, "family {k}: D = {d}, critical {critical}");
    }
}

#[test]
fn mixed_round_trip() {
    let t = MarginalTransform::new(vec![
        MarginalSpec::Uniform { lo: -5.0, hi: 2.0 },
        MarginalSpec::LogUniform { lo: 1e-3, hi: 10.0 },
        MarginalSpec::Uniform { lo: 0.0, hi: 1.0 },
        MarginalSpec::LogUniform { lo: 0.5, hi: 2.0 },
    ])
    .unwrap();
    let mut rng = rng_from_seed(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let z: Vec<f64> = (0..4).map(|_| uniform(&mut rng, -6.0, 6.0)).collect();
        let back = t.inverse(&t.forward(&z).unwrap()).unwrap();
        worst = z.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn boundary_inverse_is_an_error() {
    let t = MarginalTransform::new(vec![MarginalSpec::LogUniform { lo: 0.1, hi: 10.0 }]).unwrap();
    assert!(t.inverse(&[0.1]).is_err());
    assert!(t.inverse(&[10.0]).is_err());
    assert!(t.inverse(&[20.0]).is_err());
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = rng_from_seed(4);
    for spec in families() {
        let t = MarginalTransform::new(vec![spec]).unwrap();
        for _ in 0..20 {
            let z = uniform(&mut rng, -2.5, 2.5);
            let theta = t.forward(&[z]).unwrap()[0];
            let h = 1e-5 * theta.abs().max(1e-2);
            let fd = (t.inverse(&[theta + h]).unwrap()[0] - t.inverse(&[theta - h]).unwrap()[0]) / (2.0 * h);
            let analytic = t.inverse_jacobian(&[theta]).unwrap();
            assert!((fd / analytic - 1.0).abs() < 1e-5, "θ={theta}: {fd} vs {analytic}");
        }
    }
}

#[test]
fn change_of_variables_normalizes() {
    let z_post = |z: &[f64]| {
        let u = (z[0] - 0.3) / 0.7;
        Ok(std_normal_pdf(u) / 0.7)
    };
    let cases = [
        (MarginalSpec::Uniform { lo: 0.0, hi: 1.0 }, 0.0, 1.0),
        (MarginalSpec::Uniform { lo: -3.0, hi: 4.0 }, -3.0, 4.0),
        (MarginalSpec::LogUniform { lo: 0.1, hi: 10.0 }, 0.1, 10.0),
    ];
    for (spec, lo, hi) in cases {
        let t = MarginalTransform::new(vec![spec]).unwrap();
        let eps = 1e-12 * (hi - lo);
        let total = trapezoid(
            |th| change_of_variables(&t, z_post, &[th]).unwrap_or(0.0),
            lo + eps,
            hi - eps,
            200_000,
        );
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }
}

#[test]
fn prior_as_posterior_returns_prior_density() {
    let t = MarginalTransform::new(vec![MarginalSpec::Uniform { lo: 2.0, hi: 6.0 }]).unwrap();
    for &th in &[2.1, 3.3, 5.9] {
        let d = change_of_variables(&t, |z| Ok(std_normal_pdf(z[0])), &[th]).unwrap();
        assert!((d - 0.25).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn gamma_round_trip(shape in 0.5f64..20.0, rate in 0.1f64..10.0, z in -7.0f64..7.0) {
        let m = Marginal::new(MarginalSpec::Gamma { shape, rate }).unwrap();
        let back = m.inverse(m.forward(z).unwrap()).unwrap();
        prop_assert!((back - z).abs() < 1e-8, "z={} back={}", z, back);
    }

    #[test]
    fn uniform_quantile_inverts_cdf(lo in -10.0f64..0.0, width in 0.1f64..20.0, u in 1e-8f64..(1.0 - 1e-8)) {
        let m = Marginal::new(MarginalSpec::Uniform { lo, hi: lo + width }).unwrap();
        prop_assert!((m.cdf(m.quantile(u).unwrap()) - u).abs() < 1e-12);
    }
}
