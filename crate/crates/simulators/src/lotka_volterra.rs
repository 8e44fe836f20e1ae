//! Stochastic predator-prey (Lotka–Volterra) model simulated exactly with
//! Gillespie's direct method.
//!
//! With `X` predators and `Y` prey the reactions are
//!
//! ```text
//! θ₁·X·Y : X → X + 1     (predator birth)
//! θ₂·X   : X → X − 1     (predator death)
//! θ₃·Y   : Y → Y + 1     (prey birth)
//! θ₄·X·Y : Y → Y − 1     (prey death)
//! ```
//!
//! Parameters are log rates. Populations are recorded on a uniform grid.
//! A run that hits the event or population cap is flagged as truncated and
//! holds its last state for the remaining grid points.

use kelfi_core::rng::rng_from_seed;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, SimError, SimResult};
use crate::series::{mean, variance, SummaryVector, TimeSeries};
use crate::simulator::Simulator;

pub const PARAM_NAMES: [&str; 4] = ["log_theta1", "log_theta2", "log_theta3", "log_theta4"];

/// Ground-truth rates of the standard benchmark configuration.
pub const TRUE_RATES: [f64; 4] = [0.01, 0.5, 1.0, 0.01];

/// Uniform prior bounds on every log rate.
pub const LOG_PRIOR_BOUNDS: (f64, f64) = (-5.0, 2.0);

pub const SCHEMA: [&str; 9] = [
    "mean_predators",
    "mean_prey",
    "log_var_predators",
    "log_var_prey",
    "autocorr1_predators",
    "autocorr2_predators",
    "autocorr1_prey",
    "autocorr2_prey",
    "crosscorr",
];

/// Replaces a zero variance under the log.
pub const VAR_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LvConfig {
    pub initial: (u64, u64),
    pub t_end: f64,
    pub record_dt: f64,
    pub max_events: usize,
    pub max_population: u64,
}

impl Default for LvConfig {
    fn default() -> Self {
        Self {
            initial: (50, 100),
            t_end: 30.0,
            record_dt: 0.2,
            max_events: 10_000,
            max_population: 100_000,
        }
    }
}

impl LvConfig {
    pub fn grid_len(&self) -> usize {
        (self.t_end / self.record_dt + 1e-9).floor() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvSeries {
    pub predators: TimeSeries,
    pub prey: TimeSeries,
    pub events: usize,
}

impl LvSeries {
    pub fn truncated(&self) -> bool {
        self.predators.truncated
    }
}

/// Gillespie simulation with rates given directly (zero rates allowed).
pub fn lv_gillespie_rates(rates: &[f64], config: &LvConfig, seed: u64) -> SimResult<LvSeries> {
    check_dim(4, rates.len())?;
    if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(SimError::InvalidParameter("rates must be finite and >= 0".into()));
    }
    if !(config.record_dt > 0.0 && config.t_end >= 0.0) {
        return Err(SimError::InvalidParameter("need record_dt > 0 and t_end >= 0".into()));
    }
    let mut rng = rng_from_seed(seed);
    let n_rec = config.grid_len();
    let (mut x, mut y) = config.initial;
    let mut xs = Vec::with_capacity(n_rec);
    let mut ys = Vec::with_capacity(n_rec);
    let mut t = 0.0;
    let mut events = 0;
    let mut truncated = false;
    while xs.len() < n_rec {
        let (xf, yf) = (x as f64, y as f64);
        let h = [rates[0] * xf * yf, rates[1] * xf, rates[2] * yf, rates[3] * xf * yf];
        let total: f64 = h.iter().sum();
        let t_next = if total > 0.0 {
            let u: f64 = rng.random();
            t - (1.0 - u).ln() / total
        } else {
            f64::INFINITY
        };
        while xs.len() < n_rec && (xs.len() as f64) * config.record_dt < t_next {
            xs.push(xf);
            ys.push(yf);
        }
        if xs.len() == n_rec {
            break;
        }
        if events >= config.max_events {
            truncated = true;
            break;
        }
        t = t_next;
        let mut pick = rng.random::<f64>() * total;
        let mut reaction = 3;
        for (k, hk) in h.iter().enumerate() {
            if pick < *hk {
                reaction = k;
                break;
            }
            pick -= hk;
        }
        match reaction {
            0 => x += 1,
            1 => x -= 1,
            2 => y += 1,
            _ => y -= 1,
        }
        events += 1;
        if x > config.max_population || y > config.max_population {
            truncated = true;
            break;
        }
    }
    while xs.len() < n_rec {
        xs.push(x as f64);
        ys.push(y as f64);
    }
    let series = |values| TimeSeries {
        values,
        dt: config.record_dt,
        truncated,
    };
    Ok(LvSeries {
        predators: series(xs),
        prey: series(ys),
        events,
    })
}

/// Gillespie simulation from log rates.
pub fn lv_gillespie(log_theta: &[f64], config: &LvConfig, seed: u64) -> SimResult<LvSeries> {
    check_dim(4, log_theta.len())?;
    if log_theta.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(SimError::InvalidParameter("log rates must be < +inf".into()));
    }
    let rates: Vec<f64> = log_theta.iter().map(|v| v.exp()).collect();
    lv_gillespie_rates(&rates, config, seed)
}

/// Lag-`k` autocorrelation; `None` for a constant series.
pub fn autocorrelation(xs: &[f64], lag: usize) -> Option<f64> {
    let m = mean(xs);
    let denom: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    if denom <= 0.0 || lag >= xs.len() {
        return None;
    }
    let num: f64 = xs.iter().zip(&xs[lag..]).map(|(a, b)| (a - m) * (b - m)).sum();
    Some(num / denom)
}

/// Pearson correlation; `None` if either series is constant.
pub fn cross_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// The nine statistics before standardization.
pub fn lv_raw_summaries(series: &LvSeries) -> SimResult<SummaryVector> {
    let (x, y) = (&series.predators.values, &series.prey.values);
    if x.len() < 3 || x.len() != y.len() {
        return Err(SimError::InvalidParameter("need >= 3 recorded points per species".into()));
    }
    let mut flagged = false;
    let mut guard = |v: Option<f64>| {
        v.unwrap_or_else(|| {
            flagged = true;
            0.0
        })
    };
    let log_var = |xs: &[f64]| {
        let v = variance(xs);
        if v > 0.0 {
            (v.ln(), false)
        } else {
            (VAR_GUARD.ln(), true)
        }
    };
    let (lvx, fx) = log_var(x);
    let (lvy, fy) = log_var(y);
    let values = vec![
        mean(x),
        mean(y),
        lvx,
        lvy,
        guard(autocorrelation(x, 1)),
        guard(autocorrelation(x, 2)),
        guard(autocorrelation(y, 1)),
        guard(autocorrelation(y, 2)),
        guard(cross_correlation(x, y)),
    ];
    let mut out = SummaryVector::new(values, &SCHEMA);
    out.flagged = flagged || fx || fy;
    Ok(out)
}

/// Per-statistic location and scale from a pilot run over the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvNormalization {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    pub pilot_runs: usize,
    pub seed: u64,
}

impl LvNormalization {
    /// Mean and standard deviation of raw pilot summaries; a zero spread is
    /// replaced by one.
    pub fn from_pilot(raw: &[SummaryVector], seed: u64) -> SimResult<Self> {
        let n = raw.len();
        if n < 2 {
            return Err(SimError::InvalidParameter("pilot needs >= 2 runs".into()));
        }
        let d = SCHEMA.len();
        let mut m = vec![0.0; d];
        let mut s = vec![0.0; d];
        for k in 0..d {
            let col: Vec<f64> = raw.iter().map(|r| r.values[k]).collect();
            m[k] = mean(&col);
            let sd = variance(&col).sqrt();
            s[k] = if sd > 0.0 { sd } else { 1.0 };
        }
        Ok(Self {
            mean: m,
            stddev: s,
            pilot_runs: n,
            seed,
        })
    }

    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; SCHEMA.len()],
            stddev: vec![1.0; SCHEMA.len()],
            pilot_runs: 0,
            seed: 0,
        }
    }

    pub fn apply(&self, raw: &SummaryVector) -> SummaryVector {
        let mut out = raw.clone();
        for ((v, m), s) in out.values.iter_mut().zip(&self.mean).zip(&self.stddev) {
            *v = (*v - m) / s;
        }
        out
    }
}

pub fn lv_summaries(series: &LvSeries, norm: &LvNormalization) -> SimResult<SummaryVector> {
    Ok(norm.apply(&lv_raw_summaries(series)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotkaVolterra {
    pub config: LvConfig,
    pub normalization: LvNormalization,
}

impl LotkaVolterra {
    pub fn raw(config: LvConfig) -> Self {
        Self {
            config,
            normalization: LvNormalization::identity(),
        }
    }
}

impl Simulator for LotkaVolterra {
    fn name(&self) -> &'static str {
        "lotka_volterra"
    }

    fn param_dim(&self) -> usize {
        4
    }

    fn schema(&self) -> Vec<String> {
        SCHEMA.iter().map(|s| s.to_string()).collect()
    }

    fn summaries(&self, theta: &[f64], seed: u64) -> SimResult<SummaryVector> {
        lv_summaries(&lv_gillespie(theta, &self.config, seed)?, &self.normalization)
    }
}
