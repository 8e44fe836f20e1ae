//! The end-to-end workflow: simulate, learn scales, fit, herd, summarize,
//! evaluate. Every stage is deterministic given the configuration.

use std::path::Path;
use std::time::Instant;

use kelfi_core::learning::{ArdOutcome, MkmlSurface};
use kelfi_core::rng::derive_seed;
use kelfi_core::transforms::{transformed_posterior_density, MarginalSpec, MarginalTransform};
use kelfi_core::{
    candidates_from_prior, herd, herding_mmd, learn_ard_eps, learn_scales, mkml_surface, EmbeddingMode,
    Hyperparameters, ModelOptions, SimulationSet, SurrogateState,
};
use kelfi_sim::expgamma::{expgamma_posterior_from_mean, GammaDensity};
use kelfi_sim::lotka_volterra::LvNormalization;
use kelfi_sim::nmse::{mse_per_stat, normalize, nmse};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ProblemKind};
use crate::error::{refusal_message, HarnessError, HarnessResult};
use crate::io::{read_json, read_table, write_json, write_table, Table};
use crate::problem::{streams, Observed, Problem, SimulationTable};

pub const SCHEMA_VERSION: u32 = 1;

/// Points used for the total-variation diagnostic.
const TV_POINTS: usize = 20_001;

/// Problem, observation and simulations shared by all later stages.
pub struct Context {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub observed: Observed,
    pub table: SimulationTable,
    pub sims: SimulationSet,
    pub simulate_secs: f64,
}

impl Context {
    pub fn new(config: &ExperimentConfig) -> HarnessResult<Self> {
        let start = Instant::now();
        let problem = Problem::build(config)?;
        let observed = problem.observe(config)?;
        let table = problem.simulate(config.m)?;
        Self::assemble(config, problem, observed, table, start)
    }

    /// Reuses `simulations.csv` from `dir` when it was written for the same
    /// configuration; otherwise simulates.
    pub fn load_or_simulate(config: &ExperimentConfig, dir: &Path) -> HarnessResult<Self> {
        let start = Instant::now();
        let meta_path = dir.join(SIM_META);
        if let Ok(meta) = read_json::<SimulationMeta>(&meta_path) {
            if meta.config_hash == config.hash() {
                let problem = Problem::build(config)?;
                let table = read_table(&dir.join(SIM_TABLE))?;
                let table = SimulationTable::from_table(&table, config.problem.param_dim(), meta.resampled)?;
                return Self::assemble(config, problem, meta.observed, table, start);
            }
        }
        Self::new(config)
    }

    fn assemble(
        config: &ExperimentConfig,
        problem: Problem,
        observed: Observed,
        table: SimulationTable,
        start: Instant,
    ) -> HarnessResult<Self> {
        let sims = table.simulation_set()?;
        Ok(Self {
            config: config.clone(),
            problem,
            observed,
            table,
            sims,
            simulate_secs: start.elapsed().as_secs_f64(),
        })
    }

    pub fn options(&self) -> ModelOptions {
        ModelOptions {
            eps_kernel: self.config.eps_kernel,
            embedding: EmbeddingMode::Closed,
        }
    }

    pub fn write_simulations(&self, dir: &Path) -> HarnessResult<()> {
        write_table(&dir.join(SIM_TABLE), &self.table.to_table())?;
        write_json(
            &dir.join(SIM_META),
            &SimulationMeta {
                config_hash: self.config.hash(),
                resampled: self.table.resampled,
                observed: self.observed.clone(),
                normalization: self.problem.normalization.clone(),
            },
        )
    }
}

const SIM_TABLE: &str = "simulations.csv";
const SIM_META: &str = "simulations.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMeta {
    pub config_hash: String,
    pub resampled: usize,
    pub observed: Observed,
    pub normalization: Option<LvNormalization>,
}

/// Learned hyperparameters. `hyper` is in standardized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnOutcome {
    pub hyper: Hyperparameters,
    /// `q(y)` at the learned isotropic scales.
    pub objective: f64,
    pub grid_best: f64,
    pub grid_argmax: (f64, f64),
    pub ard: Option<ArdOutcome>,
    #[serde(skip)]
    pub surface: Option<MkmlSurface>,
}

pub fn learn(ctx: &Context) -> HarnessResult<LearnOutcome> {
    let prior = ctx.problem.z_prior();
    let options = ctx.options();
    let scales = learn_scales(
        &ctx.sims,
        &ctx.observed.inputs,
        &prior,
        &ctx.config.learning.search(),
        &options,
    )?;
    let (hyper, ard) = if ctx.config.learning.ard_steps > 0 {
        let ard = learn_ard_eps(
            &ctx.sims,
            &ctx.observed.inputs,
            &prior,
            &scales.hyper,
            ctx.config.learning.ard_steps,
            &options,
        )?;
        (ard.hyper.clone(), Some(ard))
    } else {
        (scales.hyper.clone(), None)
    };
    Ok(LearnOutcome {
        hyper,
        objective: scales.objective,
        grid_best: scales.grid_best,
        grid_argmax: scales.grid_argmax,
        ard,
        surface: Some(scales.surface),
    })
}

/// Fits the surrogate and refuses to continue when `q(y) ≤ 0`.
pub fn fit(ctx: &Context, hyper: &Hyperparameters) -> HarnessResult<SurrogateState> {
    let state = SurrogateState::fit(
        &ctx.sims,
        &ctx.observed.inputs,
        hyper,
        &ctx.problem.z_prior(),
        &ctx.options(),
    )?;
    if !state.evidence_ok() {
        return Err(HarnessError::Numerical(refusal_message(state.mkml())));
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HerdOutcome {
    /// Super-samples in standardized coordinates.
    pub z: Vec<Vec<f64>>,
    /// The same samples in parameter space.
    pub theta: Vec<Vec<f64>>,
    pub candidate_indices: Vec<usize>,
    pub candidates: usize,
    pub candidate_seed: u64,
}

pub fn herd_samples(ctx: &Context, state: &SurrogateState) -> HarnessResult<HerdOutcome> {
    let h = &ctx.config.herding;
    let seed = derive_seed(ctx.config.seed, streams::CANDIDATES, 0);
    let candidates = candidates_from_prior(&ctx.problem.z_prior(), h.candidate_count(), seed)?;
    let values = state.posterior_embedding(candidates.points())?;
    let set = herd(&values, &candidates, &state.hyper().beta, h.samples)?;
    let theta = set
        .samples
        .iter()
        .map(|z| ctx.problem.transform.forward(z))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HerdOutcome {
        z: set.samples,
        theta,
        candidate_indices: set.indices,
        candidates: candidates.len(),
        candidate_seed: seed,
    })
}

/// Type-7 sample quantile (linear interpolation between order statistics).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Central 95% interval of each coordinate.
pub fn credible_intervals(samples: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let d = samples.first().map_or(0, Vec::len);
    (0..d)
        .map(|k| {
            let mut col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            col.sort_by(f64::total_cmp);
            (quantile(&col, 0.025), quantile(&col, 0.975))
        })
        .collect()
}

pub fn sample_mean(samples: &[Vec<f64>]) -> Vec<f64> {
    let d = samples.first().map_or(0, Vec::len);
    let mut m = vec![0.0; d];
    for s in samples {
        m.iter_mut().zip(s).for_each(|(a, v)| *a += v);
    }
    m.iter_mut().for_each(|a| *a /= samples.len() as f64);
    m
}

/// `n` evenly spaced points on `[lo, hi]`; a single point sits at the
/// midpoint.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Posterior density on a grid (one or two parameters) or marginal
/// histograms of the super-samples (more parameters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityGrid {
    Grid {
        axes: Vec<Vec<f64>>,
        /// Row-major over `axes`, last axis fastest.
        density: Vec<f64>,
    },
    Histograms {
        /// Per parameter: bin edges and densities.
        edges: Vec<Vec<f64>>,
        density: Vec<Vec<f64>>,
    },
}

impl DensityGrid {
    pub fn to_table(&self) -> Table {
        match self {
            DensityGrid::Grid { axes, density } => {
                let mut header: Vec<String> = (0..axes.len()).map(|k| format!("theta_{k}")).collect();
                header.push("density".into());
                let mut t = Table::new(header);
                if axes.len() == 1 {
                    for (x, p) in axes[0].iter().zip(density) {
                        t.push(vec![*x, *p]);
                    }
                } else {
                    let n1 = axes[1].len();
                    for (i, x) in axes[0].iter().enumerate() {
                        for (j, y) in axes[1].iter().enumerate() {
                            t.push(vec![*x, *y, density[i * n1 + j]]);
                        }
                    }
                }
                t
            }
            DensityGrid::Histograms { edges, density } => {
                let mut t = Table::new(vec!["param".into(), "lo".into(), "hi".into(), "density".into()]);
                for (k, (e, p)) in edges.iter().zip(density).enumerate() {
                    for (w, v) in e.windows(2).zip(p) {
                        t.push(vec![k as f64, w[0], w[1], *v]);
                    }
                }
                t
            }
        }
    }
}

/// Default plotting range: the prior's 0.1% and 99.9% quantiles.
pub fn default_ranges(t: &MarginalTransform) -> HarnessResult<Vec<(f64, f64)>> {
    t.marginals()
        .iter()
        .map(|m| Ok((m.quantile(1e-3)?, m.quantile(1.0 - 1e-3)?)))
        .collect()
}

/// Evaluates the parameter-space posterior density on a tensor grid.
pub fn emit_density_grid(
    transform: &MarginalTransform,
    state: &SurrogateState,
    ranges: &[(f64, f64)],
    resolution: usize,
) -> HarnessResult<DensityGrid> {
    if !state.evidence_ok() {
        return Err(HarnessError::Numerical(refusal_message(state.mkml())));
    }
    let axes: Vec<Vec<f64>> = ranges
        .iter()
        .map(|&(lo, hi)| linspace(lo, hi, resolution))
        .collect();
    let density = match axes.len() {
        1 => axes[0]
            .iter()
            .map(|&x| transformed_posterior_density(transform, state, &[x]))
            .collect::<Result<Vec<_>, _>>()?,
        2 => {
            let mut out = Vec::with_capacity(resolution * resolution);
            for &x in &axes[0] {
                for &y in &axes[1] {
                    out.push(transformed_posterior_density(transform, state, &[x, y])?);
                }
            }
            out
        }
        d => {
            return Err(HarnessError::Config(format!(
                "density grids need one or two parameters, got {d}"
            )))
        }
    };
    Ok(DensityGrid::Grid { axes, density })
}

/// Normalized histograms of each coordinate.
pub fn marginal_histograms(samples: &[Vec<f64>], ranges: &[(f64, f64)], bins: usize) -> DensityGrid {
    let n = samples.len() as f64;
    let mut edges = Vec::with_capacity(ranges.len());
    let mut density = Vec::with_capacity(ranges.len());
    for (k, &(lo, hi)) in ranges.iter().enumerate() {
        let e = linspace(lo, hi, bins + 1);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0.0; bins];
        for s in samples {
            let x = s[k];
            if x >= lo && x <= hi && width > 0.0 {
                let b = (((x - lo) / width) as usize).min(bins - 1);
                counts[b] += 1.0;
            }
        }
        density.push(counts.iter().map(|c| c / (n * width)).collect());
        edges.push(e);
    }
    DensityGrid::Histograms { edges, density }
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Conjugate posterior of the toy given its observed summary, when the
/// prior is a Gamma marginal.
pub fn toy_true_posterior(config: &ExperimentConfig, observed: &Observed) -> Option<GammaDensity> {
    if config.problem != ProblemKind::Expgamma {
        return None;
    }
    match config.prior_specs().as_slice() {
        [MarginalSpec::Gamma { shape, rate }] => {
            let prior = GammaDensity::new(*shape, *rate).ok()?;
            Some(expgamma_posterior_from_mean(prior, observed.summaries[0], config.expgamma.n))
        }
        _ => None,
    }
}

/// `½∫|p − p*|` between the surrogate posterior and the conjugate posterior
/// over the prior's central `1 − 2·10⁻⁹` mass.
pub fn toy_tv_distance(
    transform: &MarginalTransform,
    state: &SurrogateState,
    truth: &GammaDensity,
) -> HarnessResult<f64> {
    let m = &transform.marginals()[0];
    let lo = m.quantile(1e-9)?.min(truth.mean() / 100.0);
    let hi = m.upper_quantile(1e-9)?.max(truth.mean() + 20.0 * truth.stddev());
    let xs = linspace(lo, hi, TV_POINTS);
    let gap = xs
        .iter()
        .map(|&x| Ok((transformed_posterior_density(transform, state, &[x])? - truth.pdf(x)).abs()))
        .collect::<HarnessResult<Vec<_>>>()?;
    Ok(0.5 * trapezoid(&xs, &gap))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tv_vs_truth: Option<f64>,
    pub baseline_mse: Option<Vec<f64>>,
    pub nmse_mean: Option<f64>,
    pub nmse_mode: Option<f64>,
    pub calibration_nmse: Option<f64>,
    pub eval_resampled: usize,
}

/// Per-statistic MSE under prior draws from `stream`.
pub fn prior_mse(ctx: &Context, stream: u64, runs: usize) -> HarnessResult<(Vec<f64>, usize)> {
    let params = (0..runs as u64)
        .map(|i| ctx.problem.prior_draw(stream, i))
        .collect::<HarnessResult<Vec<_>>>()?;
    let report = mse_per_stat(
        ctx.problem.simulator.as_ref(),
        &ctx.observed.summary_vector(),
        |i| params[i].clone(),
        runs,
        derive_seed(ctx.config.seed, stream, u64::MAX),
    )?;
    Ok((report.per_stat, report.resampled))
}

pub fn evaluate(ctx: &Context, mean: &[f64], mode: &[f64]) -> HarnessResult<Metrics> {
    let ev = &ctx.config.evaluation;
    let mut out = Metrics::default();
    if ev.nmse_evals == 0 {
        return Ok(out);
    }
    let (baseline, r) = prior_mse(ctx, streams::BASELINE, ev.baseline_runs)?;
    out.eval_resampled += r;
    let obs = ctx.observed.summary_vector();
    let sim = ctx.problem.simulator.as_ref();
    let seed = |k| derive_seed(ctx.config.seed, streams::NMSE_EVAL, k);
    out.nmse_mean = Some(nmse(mean, &obs, sim, &baseline, ev.nmse_evals, seed(0))?);
    out.nmse_mode = Some(nmse(mode, &obs, sim, &baseline, ev.nmse_evals, seed(1))?);
    if ev.calibration {
        let (cal, r) = prior_mse(ctx, streams::CALIBRATION, ev.baseline_runs)?;
        out.eval_resampled += r;
        out.calibration_nmse = Some(normalize(&cal, &baseline)?);
    }
    out.baseline_mse = Some(baseline);
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub simulate: f64,
    pub learn: f64,
    pub fit: f64,
    pub herd: f64,
    pub summarize: f64,
    pub evaluate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub schema_version: u32,
    pub config_hash: String,
    pub problem: ProblemKind,
    pub m: usize,
    pub seed: u64,
    pub observed: Observed,
    pub simulation_resampled: usize,
    pub normalization: Option<LvNormalization>,
    pub learning: LearnOutcome,
    /// `q(y)` of the fitted surrogate.
    pub mkml: f64,
    pub super_samples: HerdOutcome,
    /// Herding objective of every prefix of the super-samples.
    pub herding_mmd: Vec<f64>,
    pub posterior_mean: Vec<f64>,
    /// Surrogate posterior mode in standardized coordinates, mapped to
    /// parameter space.
    pub posterior_mode: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub density: DensityGrid,
    pub metrics: Metrics,
    pub timing: StageTimes,
    /// SHA-256 of the artifact with timing zeroed and this field empty.
    pub content_hash: String,
}

impl RunArtifact {
    pub fn compute_hash(&self) -> String {
        let mut c = self.clone();
        c.timing = StageTimes::default();
        c.content_hash = String::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("artifact serializes")))
    }
}

/// Runs every stage on an already simulated context.
pub fn run_with(ctx: &Context) -> HarnessResult<RunArtifact> {
    let cfg = &ctx.config;
    let mut timing = StageTimes {
        simulate: ctx.simulate_secs,
        ..StageTimes::default()
    };

    let t = Instant::now();
    let learning = learn(ctx)?;
    timing.learn = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let state = fit(ctx, &learning.hyper)?;
    timing.fit = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let herded = herd_samples(ctx, &state)?;
    timing.herd = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let samples = kelfi_core::SuperSampleSet {
        samples: herded.z.clone(),
        indices: herded.candidate_indices.clone(),
        objective_trace: Vec::new(),
        kernel_sum: Vec::new(),
    };
    let mmd = herding_mmd(&samples, &state, &EmbeddingMode::Closed)?;
    let transform = &ctx.problem.transform;
    let posterior_mean = sample_mean(&herded.theta);
    let mode = state.kmp_mode(
        cfg.herding.mode_restarts,
        derive_seed(cfg.seed, streams::MODE, 0),
    )?;
    let posterior_mode = transform.forward(&mode.point)?;
    let intervals = credible_intervals(&herded.theta);
    let ranges = match &cfg.grid.ranges {
        Some(r) => r.clone(),
        None => default_ranges(transform)?,
    };
    let density = if transform.dim() <= 2 {
        emit_density_grid(transform, &state, &ranges, cfg.grid.resolution)?
    } else {
        marginal_histograms(&herded.theta, &ranges, cfg.grid.histogram_bins)
    };
    let mut metrics = Metrics::default();
    if let Some(truth) = toy_true_posterior(cfg, &ctx.observed) {
        metrics.tv_vs_truth = Some(toy_tv_distance(transform, &state, &truth)?);
    }
    timing.summarize = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let evaluated = evaluate(ctx, &posterior_mean, &posterior_mode)?;
    metrics = Metrics {
        tv_vs_truth: metrics.tv_vs_truth,
        ..evaluated
    };
    timing.evaluate = t.elapsed().as_secs_f64();

    let mut artifact = RunArtifact {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        problem: cfg.problem,
        m: cfg.m,
        seed: cfg.seed,
        observed: ctx.observed.clone(),
        simulation_resampled: ctx.table.resampled,
        normalization: ctx.problem.normalization.clone(),
        learning,
        mkml: state.mkml(),
        super_samples: herded,
        herding_mmd: mmd,
        posterior_mean,
        posterior_mode,
        intervals,
        density,
        metrics,
        timing,
        content_hash: String::new(),
    };
    artifact.content_hash = artifact.compute_hash();
    Ok(artifact)
}

pub fn run_experiment(config: &ExperimentConfig) -> HarnessResult<RunArtifact> {
    run_with(&Context::new(config)?)
}

pub fn surface_table(surface: &MkmlSurface) -> Table {
    let mut t = Table::new(vec!["eps".into(), "beta0".into(), "mkml".into()]);
    for (i, e) in surface.eps.iter().enumerate() {
        for (j, b) in surface.beta0.iter().enumerate() {
            t.push(vec![*e, *b, surface.values[i][j]]);
        }
    }
    t
}

/// Inverse of [`surface_table`].
pub fn surface_from_table(t: &Table) -> HarnessResult<MkmlSurface> {
    let bad = || HarnessError::Io("malformed surface table".into());
    let mut eps: Vec<f64> = Vec::new();
    let mut beta0: Vec<f64> = Vec::new();
    for r in &t.rows {
        if r.len() != 3 {
            return Err(bad());
        }
        if !eps.contains(&r[0]) {
            eps.push(r[0]);
        }
        if !beta0.contains(&r[1]) {
            beta0.push(r[1]);
        }
    }
    if eps.len() * beta0.len() != t.rows.len() {
        return Err(bad());
    }
    let values = t
        .rows
        .chunks(beta0.len())
        .map(|c| c.iter().map(|r| r[2]).collect())
        .collect();
    Ok(MkmlSurface { eps, beta0, values })
}

/// MKML over the configured learning grid.
pub fn surface(ctx: &Context) -> HarnessResult<MkmlSurface> {
    let search = ctx.config.learning.search();
    search.validate()?;
    Ok(mkml_surface(
        &ctx.sims,
        &ctx.observed.inputs,
        &ctx.problem.z_prior(),
        &search.eps_grid(),
        &search.beta0_grid(),
        &ctx.options(),
    )?)
}

pub fn samples_table(h: &HerdOutcome) -> Table {
    let d = h.theta.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (0..d).map(|k| format!("theta_{k}")).collect();
    header.extend((0..d).map(|k| format!("z_{k}")));
    let mut t = Table::new(header);
    for (th, z) in h.theta.iter().zip(&h.z) {
        t.push(th.iter().chain(z).copied().collect());
    }
    t
}

fn mmd_table(mmd: &[f64]) -> Table {
    let mut t = Table::new(vec!["samples".into(), "herding_mmd".into()]);
    for (s, v) in mmd.iter().enumerate() {
        t.push(vec![(s + 1) as f64, *v]);
    }
    t
}

/// Writes the artifact and its tables into `dir`.
pub fn write_artifact(dir: &Path, artifact: &RunArtifact) -> HarnessResult<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("artifact.json"), artifact)?;
    write_table(&dir.join("super_samples.csv"), &samples_table(&artifact.super_samples))?;
    write_table(&dir.join("density.csv"), &artifact.density.to_table())?;
    write_table(&dir.join("herding_mmd.csv"), &mmd_table(&artifact.herding_mmd))?;
    if let Some(s) = &artifact.learning.surface {
        write_table(&dir.join("surface.csv"), &surface_table(s))?;
    }
    Ok(())
}
