//! Hyperparameter learning by maximizing the marginal surrogate likelihood
//! `q(y; ε, β, λ)`.
//!
//! The default parameterization ties `β = β₀σ` and `λ = 10⁻³β₀`, leaving a
//! 2-D search over `(ε, β₀)`. The search is a log-spaced grid followed by
//! alternating golden-section refinement; ARD then refines one `ε_i` per
//! summary statistic by coordinate ascent.
//!
//! For fixed `β` (hence fixed `L` and `λ`) the objective is linear in the
//! ε-kernel vector: `q(y) = μ_Θᵀ (L + mλI)⁻¹ κ_ε(y) = wᵀ κ_ε(y)`. An
//! [`MkmlProfile`] caches `w`, so every ε evaluation costs `O(m·n)` and only
//! moves in `β₀` pay for a new factorization.

use serde::{Deserialize, Serialize};

use crate::embedding::{GaussianPrior, PriorEmbedder};
use crate::error::{check_dim, Error, Result};
use crate::kernels::{Discrepancies, GramMatrix, LengthScales, RegularizedSolver};
use crate::surrogate::{dot, Hyperparameters, ModelOptions, SimulationSet};

/// Search box and effort for [`learn_scales`]. Ranges are `log10` bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningConfig {
    pub eps_log_range: (f64, f64),
    pub beta0_log_range: (f64, f64),
    pub grid_points: usize,
    pub local_steps: usize,
    pub step_tolerance: f64,
    /// Fixed `λ` instead of the `10⁻³β₀` tie.
    #[serde(default)]
    pub lambda_override: Option<f64>,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            eps_log_range: (-3.0, 1.0),
            beta0_log_range: (-2.0, 1.0),
            grid_points: 13,
            local_steps: 3,
            step_tolerance: 1e-3,
            lambda_override: None,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ok_range(self.eps_log_range) || !ok_range(self.beta0_log_range) {
            return Err(Error::InvalidParameter("log ranges need lo < hi".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidParameter("grid_points must be >= 2".into()));
        }
        if !(self.step_tolerance.is_finite() && self.step_tolerance > 0.0) {
            return Err(Error::InvalidParameter("step_tolerance must be > 0".into()));
        }
        if let Some(l) = self.lambda_override {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidParameter("lambda_override must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn eps_grid(&self) -> Vec<f64> {
        logspace(self.eps_log_range, self.grid_points)
    }

    pub fn beta0_grid(&self) -> Vec<f64> {
        logspace(self.beta0_log_range, self.grid_points)
    }

    fn hyper(&self, eps: LengthScales, beta0: f64, prior: &GaussianPrior) -> Result<Hyperparameters> {
        let h = Hyperparameters::tied(eps, beta0, prior.stddev())?;
        match self.lambda_override {
            Some(l) => h.with_lambda(l),
            None => Ok(h),
        }
    }
}

pub fn logspace((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![10f64.powf(0.5 * (lo + hi))];
    }
    (0..n)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

/// `w = (L + mλI)⁻¹ μ_Θ` for one `(β, λ)`; evaluates `q(y)` for any ε.
#[derive(Debug, Clone)]
pub struct MkmlProfile<'a> {
    table: &'a Discrepancies,
    w: Vec<f64>,
}

impl<'a> MkmlProfile<'a> {
    pub fn new(
        sims: &SimulationSet,
        table: &'a Discrepancies,
        prior: &GaussianPrior,
        hyper: &Hyperparameters,
        options: &ModelOptions,
    ) -> Result<Self> {
        check_dim(sims.len(), table.len())?;
        let gram = GramMatrix::new(sims.thetas(), &hyper.beta)?;
        let solver = RegularizedSolver::new(&gram, hyper.lambda)?;
        let embedder = PriorEmbedder::new(prior, &hyper.beta, &options.embedding)?;
        let mu = sims
            .thetas()
            .iter()
            .map(|t| embedder.prior_embedding(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            table,
            w: solver.solve(&mu)?,
        })
    }

    pub fn value(&self, eps: &LengthScales) -> Result<f64> {
        Ok(dot(&self.w, &self.table.kernel_vector(eps)?))
    }

    /// Objective at an isotropic ε; failures map to `-∞`.
    fn iso(&self, eps: f64) -> f64 {
        LengthScales::isotropic(eps, self.table.eps_dim())
            .and_then(|e| self.value(&e))
            .map(sanitize)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// `q(y)` under the tied parameterization; factorization failure gives `-∞`.
pub fn mkml_objective(
    sims: &SimulationSet,
    observed: &[f64],
    prior: &GaussianPrior,
    eps: &LengthScales,
    beta0: f64,
    options: &ModelOptions,
) -> f64 {
    let run = || -> Result<f64> {
        let table = Discrepancies::new(options.eps_kernel, observed, sims.summaries())?;
        let hyper = Hyperparameters::tied(eps.clone(), beta0, prior.stddev())?;
        MkmlProfile::new(sims, &table, prior, &hyper, options)?.value(eps)
    };
    run().map(sanitize).unwrap_or(f64::NEG_INFINITY)
}

/// `q(y)` on an `(ε, β₀)` grid. `values[i][j]` is at `(eps[i], beta0[j])`;
/// failed cells hold `-∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MkmlSurface {
    pub eps: Vec<f64>,
    pub beta0: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl MkmlSurface {
    /// Largest finite cell; ties go to smaller ε, then smaller β₀.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bj, bv)) => v > bv || (v == bv && (i, j) < (bi, bj)),
                };
                if better {
                    best = Some((i, j, v));
                }
            }
        }
        best
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i + 1 < self.eps.len() && j + 1 < self.beta0.len()
    }
}

fn surface_with_table(
    sims: &SimulationSet,
    table: &Discrepancies,
    prior: &GaussianPrior,
    eps_grid: &[f64],
    beta0_grid: &[f64],
    config: &LearningConfig,
    options: &ModelOptions,
) -> MkmlSurface {
    let mut values = vec![vec![f64::NEG_INFINITY; beta0_grid.len()]; eps_grid.len()];
    for (j, &b0) in beta0_grid.iter().enumerate() {
        let Ok(hyper) = LengthScales::isotropic(1.0, table.eps_dim())
            .and_then(|e| config.hyper(e, b0, prior))
        else {
            continue;
        };
        let Ok(profile) = MkmlProfile::new(sims, table, prior, &hyper, options) else {
            continue;
        };
        for (i, &e) in eps_grid.iter().enumerate() {
            values[i][j] = profile.iso(e);
        }
    }
    MkmlSurface {
        eps: eps_grid.to_vec(),
        beta0: beta0_grid.to_vec(),
        values,
    }
}

/// Evaluates the objective over explicit grids with isotropic ε.
pub fn mkml_surface(
    sims: &SimulationSet,
    observed: &[f64],
    prior: &GaussianPrior,
    eps_grid: &[f64],
    beta0_grid: &[f64],
    options: &ModelOptions,
) -> Result<MkmlSurface> {
    if eps_grid.is_empty() || beta0_grid.is_empty() {
        return Err(Error::Empty("surface grid"));
    }
    let table = Discrepancies::new(options.eps_kernel, observed, sims.summaries())?;
    Ok(surface_with_table(
        sims,
        &table,
        prior,
        eps_grid,
        beta0_grid,
        &LearningConfig::default(),
        options,
    ))
}

/// Golden-section maximization on `[lo, hi]`; returns the best point seen.
fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fd > fc { (d, fd) } else { (c, fc) };
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd > best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedScales {
    pub hyper: Hyperparameters,
    pub objective: f64,
    pub grid_best: f64,
    pub grid_argmax: (f64, f64),
    pub surface: MkmlSurface,
}

impl LearnedScales {
    /// The learned isotropic ε.
    pub fn eps(&self) -> f64 {
        self.hyper.eps.as_slice()[0]
    }
}

/// Grid search over `(ε, β₀)` followed by coordinate-wise golden-section
/// refinement in log space. Refinement only accepts improvements.
pub fn learn_scales(
    sims: &SimulationSet,
    observed: &[f64],
    prior: &GaussianPrior,
    config: &LearningConfig,
    options: &ModelOptions,
) -> Result<LearnedScales> {
    config.validate()?;
    let table = Discrepancies::new(options.eps_kernel, observed, sims.summaries())?;
    let n_eps = table.eps_dim();
    let surface = surface_with_table(
        sims,
        &table,
        prior,
        &config.eps_grid(),
        &config.beta0_grid(),
        config,
        options,
    );
    let (i, j, grid_best) = surface.argmax().ok_or_else(|| {
        Error::Degenerate("objective is -inf on the whole learning grid".into())
    })?;

    let (elo, ehi) = config.eps_log_range;
    let (blo, bhi) = config.beta0_log_range;
    let de = (ehi - elo) / (config.grid_points - 1) as f64;
    let db = (bhi - blo) / (config.grid_points - 1) as f64;
    let mut le = surface.eps[i].log10();
    let mut lb = surface.beta0[j].log10();
    let mut best = grid_best;

    let profile_at = |lb: f64| -> Option<MkmlProfile<'_>> {
        let hyper = config
            .hyper(LengthScales::isotropic(1.0, n_eps).ok()?, 10f64.powf(lb), prior)
            .ok()?;
        MkmlProfile::new(sims, &table, prior, &hyper, options).ok()
    };

    for _ in 0..config.local_steps {
        let mut improved = false;
        if let Some(profile) = profile_at(lb) {
            let (x, fx) = golden_max(
                |x| profile.iso(10f64.powf(x)),
                (le - de).max(elo),
                (le + de).min(ehi),
                config.step_tolerance,
            );
            if fx > best {
                le = x;
                best = fx;
                improved = true;
            }
        }
        let eps_now = 10f64.powf(le);
        let (x, fx) = golden_max(
            |x| profile_at(x).map_or(f64::NEG_INFINITY, |p| p.iso(eps_now)),
            (lb - db).max(blo),
            (lb + db).min(bhi),
            config.step_tolerance,
        );
        if fx > best {
            lb = x;
            best = fx;
            improved = true;
        }
        if !improved {
            break;
        }
    }

    let hyper = config.hyper(LengthScales::isotropic(10f64.powf(le), n_eps)?, 10f64.powf(lb), prior)?;
    Ok(LearnedScales {
        hyper,
        objective: best,
        grid_best,
        grid_argmax: (surface.eps[i], surface.beta0[j]),
        surface,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArdOutcome {
    pub hyper: Hyperparameters,
    pub start_objective: f64,
    pub objective: f64,
}

/// Bounds on `log10 ε_i` during ARD.
const ARD_LOG_BOUNDS: (f64, f64) = (-8.0, 8.0);

/// Per-statistic ε by coordinate ascent in `log10 ε_i` with `β` fixed.
/// Each sweep runs a golden-section search one decade either side of every
/// `ε_i`; steps that do not improve the objective are rejected.
pub fn learn_ard_eps(
    sims: &SimulationSet,
    observed: &[f64],
    prior: &GaussianPrior,
    start: &Hyperparameters,
    steps: usize,
    options: &ModelOptions,
) -> Result<ArdOutcome> {
    let table = Discrepancies::new(options.eps_kernel, observed, sims.summaries())?;
    let n = table.eps_dim();
    let mut log_eps: Vec<f64> = if start.eps.dim() == n {
        start.eps.as_slice().iter().map(|e| e.log10()).collect()
    } else if start.eps.dim() == 1 {
        vec![start.eps.as_slice()[0].log10(); n]
    } else {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: start.eps.dim(),
        });
    };
    let profile = MkmlProfile::new(sims, &table, prior, start, options)?;
    let eval = |le: &[f64]| {
        LengthScales::new(le.iter().map(|x| 10f64.powf(*x)).collect())
            .and_then(|e| profile.value(&e))
            .map(sanitize)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let start_objective = eval(&log_eps);
    let mut best = start_objective;
    for _ in 0..steps {
        let mut improved = false;
        for i in 0..n {
            let centre = log_eps[i];
            let mut trial = log_eps.clone();
            let (x, fx) = golden_max(
                |x| {
                    trial[i] = x;
                    eval(&trial)
                },
                (centre - 1.0).max(ARD_LOG_BOUNDS.0),
                (centre + 1.0).min(ARD_LOG_BOUNDS.1),
                1e-3,
            );
            if fx > best {
                log_eps[i] = x;
                best = fx;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    let eps = if steps == 0 {
        start.eps.clone()
    } else {
        LengthScales::new(log_eps.iter().map(|x| 10f64.powf(*x)).collect())?
    };
    Ok(ArdOutcome {
        hyper: start.clone().with_eps(eps),
        start_objective,
        objective: best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsCheckpoint {
    pub m: usize,
    pub eps: f64,
    pub beta0: f64,
    pub objective: f64,
}

/// Re-learns `(ε, β₀)` on growing prefixes of one simulation stream.
pub fn eps_decay_trace(
    sims: &SimulationSet,
    observed: &[f64],
    prior: &GaussianPrior,
    config: &LearningConfig,
    options: &ModelOptions,
    checkpoints: &[usize],
) -> Result<Vec<EpsCheckpoint>> {
    if checkpoints.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("checkpoints must be non-decreasing".into()));
    }
    checkpoints
        .iter()
        .map(|&m| {
            let learned = learn_scales(&sims.prefix(m)?, observed, prior, config, options)?;
            Ok(EpsCheckpoint {
                m,
                eps: learned.eps(),
                beta0: learned.hyper.beta0,
                objective: learned.objective,
            })
        })
        .collect()
}
