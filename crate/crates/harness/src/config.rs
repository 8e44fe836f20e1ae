//! Experiment configuration (TOML). Unknown keys are rejected and every
//! field is validated before any simulation runs.

use std::path::Path;

use kelfi_core::learning::LearningConfig;
use kelfi_core::transforms::{MarginalSpec, MarginalTransform};
use kelfi_core::EpsKernelKind;
use kelfi_sim::blowfly::{self, BlowflyConfig};
use kelfi_sim::expgamma::ExpGamma;
use kelfi_sim::lotka_volterra::{self as lv, LvConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Expgamma,
    Blowfly,
    LotkaVolterra,
}

impl ProblemKind {
    pub fn param_dim(self) -> usize {
        match self {
            ProblemKind::Expgamma => 1,
            ProblemKind::Blowfly => 6,
            ProblemKind::LotkaVolterra => 4,
        }
    }

    pub fn default_prior(self) -> Vec<MarginalSpec> {
        match self {
            ProblemKind::Expgamma => vec![MarginalSpec::Gamma { shape: 2.0, rate: 2.0 }],
            ProblemKind::Blowfly => blowfly::PRIOR_MEAN
                .iter()
                .zip(blowfly::PRIOR_STDDEV)
                .map(|(&mean, stddev)| MarginalSpec::Gaussian { mean, stddev })
                .collect(),
            ProblemKind::LotkaVolterra => {
                let (lo, hi) = lv::LOG_PRIOR_BOUNDS;
                vec![MarginalSpec::Uniform { lo, hi }; 4]
            }
        }
    }

    pub fn default_truth(self) -> Vec<f64> {
        match self {
            ProblemKind::Expgamma => vec![1.0],
            ProblemKind::Blowfly => blowfly::PRIOR_MEAN.to_vec(),
            ProblemKind::LotkaVolterra => lv::TRUE_RATES.iter().map(|r| r.ln()).collect(),
        }
    }
}

/// Where the observed summaries come from. Without explicit `summaries`
/// they are simulated at `theta` (or the problem's default truth).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservedSection {
    pub theta: Option<Vec<f64>>,
    pub summaries: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningSection {
    pub eps_log_range: (f64, f64),
    pub beta0_log_range: (f64, f64),
    pub grid_points: usize,
    pub local_steps: usize,
    pub step_tolerance: f64,
    pub lambda: Option<f64>,
    pub ard_steps: usize,
}

impl Default for LearningSection {
    fn default() -> Self {
        Self {
            eps_log_range: (-3.0, 2.0),
            beta0_log_range: (-1.0, 1.0),
            grid_points: 16,
            local_steps: 3,
            step_tolerance: 1e-3,
            lambda: None,
            ard_steps: 0,
        }
    }
}

impl LearningSection {
    pub fn search(&self) -> LearningConfig {
        LearningConfig {
            eps_log_range: self.eps_log_range,
            beta0_log_range: self.beta0_log_range,
            grid_points: self.grid_points,
            local_steps: self.local_steps,
            step_tolerance: self.step_tolerance,
            lambda_override: self.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HerdingSection {
    /// Number of super-samples S.
    pub samples: usize,
    /// Candidate count R; defaults to 10·S.
    pub candidates: Option<usize>,
    pub mode_restarts: usize,
}

impl Default for HerdingSection {
    fn default() -> Self {
        Self {
            samples: 1000,
            candidates: None,
            mode_restarts: 10,
        }
    }
}

impl HerdingSection {
    pub fn candidate_count(&self) -> usize {
        self.candidates.unwrap_or(10 * self.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub resolution: usize,
    /// Per-dimension `(lo, hi)` in parameter space; defaults to the prior's
    /// 0.1% and 99.9% quantiles.
    pub ranges: Option<Vec<(f64, f64)>>,
    /// Bins per marginal histogram when the parameter has more than two
    /// dimensions.
    pub histogram_bins: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            resolution: 401,
            ranges: None,
            histogram_bins: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// Simulations at the point estimate; 0 disables NMSE.
    pub nmse_evals: usize,
    pub baseline_runs: usize,
    /// Also score prior-sampled estimates (should be near 100%).
    pub calibration: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            nmse_evals: 0,
            baseline_runs: 10_000,
            calibration: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LvSection {
    pub simulation: LvConfig,
    /// Prior runs used to standardize the summaries.
    pub pilot_runs: usize,
}

impl Default for LvSection {
    fn default() -> Self {
        Self {
            simulation: LvConfig::default(),
            pilot_runs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    /// Simulation budget.
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub prior: Option<Vec<MarginalSpec>>,
    #[serde(default)]
    pub observed: ObservedSection,
    #[serde(default)]
    pub eps_kernel: EpsKernelKind,
    #[serde(default)]
    pub learning: LearningSection,
    #[serde(default)]
    pub herding: HerdingSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub expgamma: ExpGamma,
    #[serde(default)]
    pub blowfly: BlowflyConfig,
    #[serde(default)]
    pub lotka_volterra: LvSection,
    #[serde(default = "default_attempts")]
    pub max_resample_attempts: usize,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn default_attempts() -> usize {
    100
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    /// Minimal configuration with defaults for everything else.
    pub fn new(problem: ProblemKind, m: usize, seed: u64) -> Self {
        Self {
            problem,
            m,
            seed,
            prior: None,
            observed: ObservedSection::default(),
            eps_kernel: EpsKernelKind::default(),
            learning: LearningSection::default(),
            herding: HerdingSection::default(),
            grid: GridSection::default(),
            evaluation: EvaluationSection::default(),
            expgamma: ExpGamma::default(),
            blowfly: BlowflyConfig::default(),
            lotka_volterra: LvSection::default(),
            max_resample_attempts: default_attempts(),
            output_dir: None,
        }
    }

    pub fn from_toml_str(text: &str) -> HarnessResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn prior_specs(&self) -> Vec<MarginalSpec> {
        self.prior.clone().unwrap_or_else(|| self.problem.default_prior())
    }

    pub fn transform(&self) -> HarnessResult<MarginalTransform> {
        MarginalTransform::new(self.prior_specs()).map_err(|e| config_err(format!("prior: {e}")))
    }

    pub fn truth(&self) -> Vec<f64> {
        self.observed.theta.clone().unwrap_or_else(|| self.problem.default_truth())
    }

    pub fn validate(&self) -> HarnessResult<()> {
        let d = self.problem.param_dim();
        if self.m == 0 {
            return Err(config_err("m must be >= 1"));
        }
        let t = self.transform()?;
        if t.dim() != d {
            return Err(config_err(format!("prior has {} marginals, problem needs {d}", t.dim())));
        }
        if let Some(theta) = &self.observed.theta {
            if theta.len() != d {
                return Err(config_err(format!("observed.theta needs {d} entries")));
            }
            t.inverse(theta)
                .map_err(|_| config_err("observed.theta lies outside the prior support"))?;
        }
        if let Some(s) = &self.observed.summaries {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(config_err("observed.summaries must be finite"));
            }
        }
        self.learning
            .search()
            .validate()
            .map_err(|e| config_err(format!("learning: {e}")))?;
        if self.herding.samples == 0 || self.herding.candidate_count() == 0 {
            return Err(config_err("herding sizes must be >= 1"));
        }
        if self.grid.resolution == 0 || self.grid.histogram_bins == 0 {
            return Err(config_err("grid.resolution and grid.histogram_bins must be >= 1"));
        }
        if let Some(r) = &self.grid.ranges {
            if r.len() != d || r.iter().any(|(lo, hi)| !(lo <= hi)) {
                return Err(config_err(format!("grid.ranges needs {d} (lo, hi) pairs")));
            }
        }
        if self.evaluation.nmse_evals > 0 && self.evaluation.baseline_runs == 0 {
            return Err(config_err("evaluation.baseline_runs must be >= 1"));
        }
        if self.max_resample_attempts == 0 {
            return Err(config_err("max_resample_attempts must be >= 1"));
        }
        match self.problem {
            ProblemKind::Expgamma if self.expgamma.n == 0 => {
                return Err(config_err("expgamma.n must be >= 1"));
            }
            ProblemKind::Blowfly if self.blowfly.length < 8 || self.blowfly.smoothing_window == 0 => {
                return Err(config_err("blowfly needs length >= 8 and smoothing_window >= 1"));
            }
            ProblemKind::LotkaVolterra => {
                let s = &self.lotka_volterra.simulation;
                if !(s.record_dt > 0.0 && s.t_end >= 2.0 * s.record_dt) {
                    return Err(config_err("lotka_volterra needs >= 3 recorded points"));
                }
                if self.lotka_volterra.pilot_runs < 2 {
                    return Err(config_err("lotka_volterra.pilot_runs must be >= 2"));
                }
            }
            _ => {}
        }
        if let EpsKernelKind::Distributional { alpha, point_dim } = self.eps_kernel {
            if self.problem != ProblemKind::Expgamma {
                return Err(config_err("the distributional kernel needs raw datasets (expgamma only)"));
            }
            if !(alpha > 0.0) || point_dim != 1 {
                return Err(config_err("distributional kernel needs alpha > 0 and point_dim = 1"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml() {
        let c = ExperimentConfig::from_toml_str("problem = \"expgamma\"\nm = 100\n").unwrap();
        assert_eq!(c, ExperimentConfig::new(ProblemKind::Expgamma, 100, 0));
    }

    #[test]
    fn rejects_unknown_keys_and_zero_budget() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("problem = \"expgamma\"\nm = 10\nbogus = 1\n"),
            Err(HarnessError::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml_str("problem = \"expgamma\"\nm = 0\n"),
            Err(HarnessError::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml_str("problem = \"blowfly\"\nm = 10\n[learning]\nbogus = 2\n"),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ExperimentConfig::new(ProblemKind::LotkaVolterra, 50, 3);
        c.learning.ard_steps = 2;
        c.eps_kernel = EpsKernelKind::Pointwise;
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn prior_dimension_checked() {
        let mut c = ExperimentConfig::new(ProblemKind::Blowfly, 10, 0);
        c.prior = Some(vec![MarginalSpec::Uniform { lo: 0.0, hi: 1.0 }]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut a = ExperimentConfig::new(ProblemKind::Expgamma, 10, 0);
        let h = a.hash();
        a.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), h);
        a.seed = 1;
        assert_ne!(a.hash(), h);
    }
}
