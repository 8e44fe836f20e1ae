//! Sheep blowfly population dynamics with delayed density dependence.
//!
//! ```text
//! N[t+1] = P · N[t−τ] · exp(−N[t−τ]/N₀) · e[t] + N[t] · exp(−δ · ε[t])
//! e[t] ~ Gamma(shape 1/σ_p², scale σ_p²)
//! ε[t] ~ Gamma(shape 1/σ_d², scale σ_d²)
//! ```
//!
//! Both noise terms have mean one; a zero scale makes them exactly one.
//! Parameters are passed on the log scale in the order
//! `(log P, log δ, log N₀, log σ_d, log σ_p, log τ)` and the delay is
//! `τ = max(1, round(exp(log τ)))`. The history before the first step is
//! held at `N₀`; the first `burn_in` steps are discarded.

use kelfi_core::rng::rng_from_seed;
use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, SimError, SimResult};
use crate::series::{mean, SummaryVector, TimeSeries};
use crate::simulator::Simulator;

pub const PARAM_NAMES: [&str; 6] = ["log_P", "log_delta", "log_N0", "log_sigma_d", "log_sigma_p", "log_tau"];

/// Gaussian prior on the log parameters.
pub const PRIOR_MEAN: [f64; 6] = [2.0, -1.5, 6.0, -1.0, -1.0, 2.708_050_201_102_210_2];
pub const PRIOR_STDDEV: [f64; 6] = [2.0, 0.5, 0.5, 1.0, 1.0, 1.609_437_912_434_100_3];

pub const SCHEMA: [&str; 10] = [
    "log_mean_q1",
    "log_mean_q2",
    "log_mean_q3",
    "log_mean_q4",
    "diff_mean_q1",
    "diff_mean_q2",
    "diff_mean_q3",
    "diff_mean_q4",
    "peaks_low",
    "peaks_high",
];

/// Added to a non-positive quartile mean before taking its log.
pub const LOG_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowflyConfig {
    pub length: usize,
    pub burn_in: usize,
    /// Moving-average window used before counting peaks.
    pub smoothing_window: usize,
    /// Peak thresholds as multiples of the series mean.
    pub peak_thresholds: [f64; 2],
}

impl Default for BlowflyConfig {
    fn default() -> Self {
        Self {
            length: 180,
            burn_in: 50,
            smoothing_window: 5,
            peak_thresholds: [0.5, 1.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowflyParams {
    pub p: f64,
    pub delta: f64,
    pub n0: f64,
    pub sigma_d: f64,
    pub sigma_p: f64,
    pub tau: usize,
}

impl BlowflyParams {
    pub fn from_log(log_theta: &[f64]) -> SimResult<Self> {
        check_dim(6, log_theta.len())?;
        if log_theta.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidParameter("log parameters must be finite".into()));
        }
        let e: Vec<f64> = log_theta.iter().map(|v| v.exp()).collect();
        let tau = e[5].round().max(1.0);
        if !tau.is_finite() || tau > 1e6 {
            return Err(SimError::InvalidParameter(format!("delay {tau} too large")));
        }
        Ok(Self {
            p: e[0],
            delta: e[1],
            n0: e[2],
            sigma_d: e[3],
            sigma_p: e[4],
            tau: tau as usize,
        })
    }
}

/// Mean-one gamma noise; exactly one when the scale is zero.
enum Noise {
    One,
    Gamma(Gamma<f64>),
}

impl Noise {
    fn new(sigma: f64) -> SimResult<Self> {
        if sigma == 0.0 {
            return Ok(Self::One);
        }
        let s2 = sigma * sigma;
        Gamma::new(1.0 / s2, s2)
            .map(Self::Gamma)
            .map_err(|_| SimError::NonFinite)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Gamma(g) => rng.sample(g),
        }
    }
}

pub fn blowfly_simulate_params(params: &BlowflyParams, config: &BlowflyConfig, seed: u64) -> SimResult<TimeSeries> {
    let BlowflyParams {
        p,
        delta,
        n0,
        sigma_d,
        sigma_p,
        tau,
    } = *params;
    let mut rng = rng_from_seed(seed);
    let birth = Noise::new(sigma_p)?;
    let death = Noise::new(sigma_d)?;
    let steps = config.burn_in + config.length;
    // n[k] is the population at step k − tau; the first tau + 1 entries are
    // the initial history.
    let mut n = vec![n0; tau + 1];
    n.reserve(steps);
    for t in tau..tau + steps - 1 {
        let lagged = n[t - tau];
        let e = birth.sample(&mut rng);
        let eps = death.sample(&mut rng);
        let next = p * lagged * (-lagged / n0).exp() * e + n[t] * (-delta * eps).exp();
        if !next.is_finite() {
            return Err(SimError::NonFinite);
        }
        n.push(next);
    }
    let values = n[tau + config.burn_in..].to_vec();
    debug_assert_eq!(values.len(), config.length);
    Ok(TimeSeries {
        values,
        dt: 1.0,
        truncated: false,
    })
}

pub fn blowfly_simulate(log_theta: &[f64], config: &BlowflyConfig, seed: u64) -> SimResult<TimeSeries> {
    blowfly_simulate_params(&BlowflyParams::from_log(log_theta)?, config, seed)
}

/// Means of the four rank quartiles of `xs`; groups split at `⌈k·n/4⌉`.
pub fn quartile_means(xs: &[f64]) -> [f64; 4] {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cut = |k: usize| (k * n).div_ceil(4);
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        *o = mean(&sorted[cut(k)..cut(k + 1)]);
    }
    out
}

/// Trailing moving average; output length `n − window + 1`.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.clamp(1, xs.len().max(1));
    xs.windows(w).map(mean).collect()
}

/// Interior local maxima strictly above `threshold`. A plateau counts once,
/// at its first point, if it is followed by a descent.
pub fn count_peaks(xs: &[f64], threshold: f64) -> usize {
    let mut count = 0;
    let mut i = 1;
    while i + 1 < xs.len() {
        if xs[i] > xs[i - 1] {
            let mut j = i;
            while j + 1 < xs.len() && xs[j + 1] == xs[i] {
                j += 1;
            }
            if j + 1 < xs.len() && xs[j + 1] < xs[i] && xs[i] > threshold {
                count += 1;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    count
}

/// The ten summary statistics of a blowfly series.
pub fn blowfly_summaries(series: &TimeSeries, config: &BlowflyConfig) -> SimResult<SummaryVector> {
    let n = series.values.len();
    if n < 8 {
        return Err(SimError::InvalidParameter("blowfly summaries need >= 8 points".into()));
    }
    let scaled: Vec<f64> = series.values.iter().map(|v| v / 1000.0).collect();
    let mut flagged = false;
    let mut values = Vec::with_capacity(10);
    for m in quartile_means(&scaled) {
        if m > 0.0 {
            values.push(m.ln());
        } else {
            flagged = true;
            values.push((m.max(0.0) + LOG_GUARD).ln());
        }
    }
    let diffs: Vec<f64> = scaled.windows(2).map(|w| w[1] - w[0]).collect();
    values.extend(quartile_means(&diffs));
    let smooth = moving_average(&series.values, config.smoothing_window);
    let level = mean(&series.values);
    for k in config.peak_thresholds {
        values.push(count_peaks(&smooth, k * level) as f64);
    }
    let mut out = SummaryVector::new(values, &SCHEMA);
    out.flagged = flagged;
    if !out.is_finite() {
        return Err(SimError::NonFinite);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Blowfly {
    pub config: BlowflyConfig,
}

impl Simulator for Blowfly {
    fn name(&self) -> &'static str {
        "blowfly"
    }

    fn param_dim(&self) -> usize {
        6
    }

    fn schema(&self) -> Vec<String> {
        SCHEMA.iter().map(|s| s.to_string()).collect()
    }

    fn summaries(&self, theta: &[f64], seed: u64) -> SimResult<SummaryVector> {
        blowfly_summaries(&blowfly_simulate(theta, &self.config, seed)?, &self.config)
    }
}
