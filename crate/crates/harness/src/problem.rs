//! Simulator construction, simulation in standardized coordinates and the
//! observed data.
//!
//! Inference always runs on `z`, where the prior is standard normal, and
//! simulators receive `θ = T(z)` from the configured marginal transform.

use kelfi_core::rng::{derive_seed, rng_from_seed};
use kelfi_core::transforms::MarginalTransform;
use kelfi_core::{EpsKernelKind, GaussianPrior, SimulationSet};
use kelfi_sim::blowfly::Blowfly;
use kelfi_sim::lotka_volterra::{LotkaVolterra, LvNormalization};
use kelfi_sim::{simulate_finite, Simulator, SummaryVector};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ProblemKind};
use crate::error::{HarnessError, HarnessResult};
use crate::io::Table;

/// Seed streams under the root seed.
pub mod streams {
    pub const OBSERVED: u64 = 1;
    pub const SIM_PARAMS: u64 = 2;
    pub const SIM_NOISE: u64 = 3;
    pub const PILOT: u64 = 4;
    pub const CANDIDATES: u64 = 5;
    pub const MODE: u64 = 6;
    pub const NMSE_EVAL: u64 = 7;
    pub const BASELINE: u64 = 8;
    pub const CALIBRATION: u64 = 9;
}

pub struct Problem {
    pub kind: ProblemKind,
    pub transform: MarginalTransform,
    pub simulator: Box<dyn Simulator>,
    pub normalization: Option<LvNormalization>,
    pub eps_kernel: EpsKernelKind,
    pub max_attempts: usize,
    pub seed: u64,
}

/// Observation used for inference. `inputs` is what the ε-kernel sees:
/// the summaries, or the raw dataset for the distributional kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    pub theta: Option<Vec<f64>>,
    pub summaries: Vec<f64>,
    pub schema: Vec<String>,
    pub inputs: Vec<f64>,
}

impl Observed {
    pub fn summary_vector(&self) -> SummaryVector {
        SummaryVector {
            values: self.summaries.clone(),
            schema: self.schema.clone(),
            flagged: false,
        }
    }
}

/// The simulation budget: standardized draws, their images and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTable {
    pub z: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub input_names: Vec<String>,
    pub resampled: usize,
}

impl SimulationTable {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn simulation_set(&self) -> HarnessResult<SimulationSet> {
        Ok(SimulationSet::new(self.z.clone(), self.inputs.clone(), "prior")?)
    }

    pub fn to_table(&self) -> Table {
        let d = self.z.first().map_or(0, Vec::len);
        let mut header: Vec<String> = (0..d).map(|k| format!("z_{k}")).collect();
        header.extend((0..d).map(|k| format!("theta_{k}")));
        header.extend(self.input_names.iter().cloned());
        let mut t = Table::new(header);
        for ((z, th), x) in self.z.iter().zip(&self.theta).zip(&self.inputs) {
            t.push(z.iter().chain(th).chain(x).copied().collect());
        }
        t
    }

    pub fn from_table(table: &Table, param_dim: usize, resampled: usize) -> HarnessResult<Self> {
        let w = table.header.len();
        if w <= 2 * param_dim {
            return Err(HarnessError::Io("simulation table is too narrow".into()));
        }
        let mut out = Self {
            z: Vec::with_capacity(table.rows.len()),
            theta: Vec::with_capacity(table.rows.len()),
            inputs: Vec::with_capacity(table.rows.len()),
            input_names: table.header[2 * param_dim..].to_vec(),
            resampled,
        };
        for r in &table.rows {
            out.z.push(r[..param_dim].to_vec());
            out.theta.push(r[param_dim..2 * param_dim].to_vec());
            out.inputs.push(r[2 * param_dim..].to_vec());
        }
        Ok(out)
    }
}

impl Problem {
    /// Builds the simulator. Lotka–Volterra runs its pilot here to fix the
    /// summary standardization.
    pub fn build(config: &ExperimentConfig) -> HarnessResult<Self> {
        config.validate()?;
        let transform = config.transform()?;
        let (simulator, normalization): (Box<dyn Simulator>, _) = match config.problem {
            ProblemKind::Expgamma => (Box::new(config.expgamma), None),
            ProblemKind::Blowfly => (
                Box::new(Blowfly {
                    config: config.blowfly.clone(),
                }),
                None,
            ),
            ProblemKind::LotkaVolterra => {
                let lv = &config.lotka_volterra;
                let raw = LotkaVolterra::raw(lv.simulation.clone());
                let norm = pilot_normalization(&raw, &transform, lv.pilot_runs, config)?;
                (
                    Box::new(LotkaVolterra {
                        config: lv.simulation.clone(),
                        normalization: norm.clone(),
                    }),
                    Some(norm),
                )
            }
        };
        Ok(Self {
            kind: config.problem,
            transform,
            simulator,
            normalization,
            eps_kernel: config.eps_kernel,
            max_attempts: config.max_resample_attempts,
            seed: config.seed,
        })
    }

    pub fn z_prior(&self) -> GaussianPrior {
        self.transform.z_prior()
    }

    fn distributional(&self) -> bool {
        matches!(self.eps_kernel, EpsKernelKind::Distributional { .. })
    }

    /// Summaries (and kernel inputs) at `theta` for the given seed.
    fn evaluate(&self, theta: &[f64], seed: u64) -> HarnessResult<(Vec<f64>, Vec<f64>, usize)> {
        let (x, attempts) = simulate_finite(self.simulator.as_ref(), theta, seed, self.max_attempts)?;
        let inputs = if self.distributional() {
            let s = if attempts == 0 {
                seed
            } else {
                return Err(HarnessError::Numerical("raw dataset needed a reseed".into()));
            };
            self.simulator.dataset(theta, s)?
        } else {
            x.values.clone()
        };
        Ok((x.values, inputs, attempts))
    }

    fn input_names(&self, dim: usize) -> Vec<String> {
        if self.distributional() {
            (0..dim).map(|k| format!("y_{k}")).collect()
        } else {
            self.simulator.schema()
        }
    }

    pub fn observe(&self, config: &ExperimentConfig) -> HarnessResult<Observed> {
        let schema = self.simulator.schema();
        if let Some(s) = &config.observed.summaries {
            if s.len() != schema.len() {
                return Err(HarnessError::Config(format!(
                    "observed.summaries needs {} entries",
                    schema.len()
                )));
            }
            if self.distributional() {
                return Err(HarnessError::Config(
                    "the distributional kernel needs a simulated observation".into(),
                ));
            }
            return Ok(Observed {
                theta: config.observed.theta.clone(),
                summaries: s.clone(),
                schema,
                inputs: s.clone(),
            });
        }
        let theta = config.truth();
        let (summaries, inputs, _) = self.evaluate(&theta, derive_seed(self.seed, streams::OBSERVED, 0))?;
        Ok(Observed {
            theta: Some(theta),
            summaries,
            schema,
            inputs,
        })
    }

    /// Draw `j` of the budget: `z ~ N(0, I)` clamped like the prior sampler,
    /// simulated at `T(z)`.
    pub fn simulate(&self, m: usize) -> HarnessResult<SimulationTable> {
        let prior = self.z_prior();
        let mut out = SimulationTable {
            z: Vec::with_capacity(m),
            theta: Vec::with_capacity(m),
            inputs: Vec::with_capacity(m),
            input_names: Vec::new(),
            resampled: 0,
        };
        for j in 0..m as u64 {
            let mut rng = rng_from_seed(derive_seed(self.seed, streams::SIM_PARAMS, j));
            let z = prior.sample_clamped(&mut rng, kelfi_core::transforms::SAMPLE_CLAMP);
            let theta = self.transform.forward(&z)?;
            let (_, inputs, r) = self.evaluate(&theta, derive_seed(self.seed, streams::SIM_NOISE, j))?;
            out.resampled += r;
            out.z.push(z);
            out.theta.push(theta);
            out.inputs.push(inputs);
        }
        out.input_names = self.input_names(out.inputs.first().map_or(0, Vec::len));
        Ok(out)
    }

    /// Prior draw `i` of stream `stream`, in parameter space.
    pub fn prior_draw(&self, stream: u64, i: u64) -> HarnessResult<Vec<f64>> {
        let mut rng = rng_from_seed(derive_seed(self.seed, stream, i));
        Ok(self.transform.sample(&mut rng)?)
    }
}

fn pilot_normalization(
    raw: &LotkaVolterra,
    transform: &MarginalTransform,
    runs: usize,
    config: &ExperimentConfig,
) -> HarnessResult<LvNormalization> {
    let mut out = Vec::with_capacity(runs);
    for i in 0..runs as u64 {
        let mut rng = rng_from_seed(derive_seed(config.seed, streams::PILOT, 2 * i));
        let theta = transform.sample(&mut rng)?;
        let seed = derive_seed(config.seed, streams::PILOT, 2 * i + 1);
        out.push(simulate_finite(raw, &theta, seed, config.max_resample_attempts)?.0);
    }
    Ok(LvNormalization::from_pilot(&out, config.seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulation_table_round_trip() {
        let cfg = ExperimentConfig::new(ProblemKind::Expgamma, 20, 4);
        let p = Problem::build(&cfg).unwrap();
        let sims = p.simulate(20).unwrap();
        assert_eq!(sims.len(), 20);
        let back = SimulationTable::from_table(&sims.to_table(), 1, 0).unwrap();
        assert_eq!(back, sims);
        // The simulated θ is the image of z.
        for (z, th) in sims.z.iter().zip(&sims.theta) {
            assert_eq!(&p.transform.forward(z).unwrap(), th);
        }
    }

    #[test]
    fn prefixes_agree_across_budgets() {
        let cfg = ExperimentConfig::new(ProblemKind::Expgamma, 10, 4);
        let p = Problem::build(&cfg).unwrap();
        let a = p.simulate(10).unwrap();
        let b = p.simulate(25).unwrap();
        assert_eq!(a.inputs[..], b.inputs[..10]);
    }

    #[test]
    fn distributional_inputs_are_datasets() {
        let mut cfg = ExperimentConfig::new(ProblemKind::Expgamma, 5, 1);
        cfg.eps_kernel = EpsKernelKind::Distributional {
            alpha: 1.0,
            point_dim: 1,
        };
        let p = Problem::build(&cfg).unwrap();
        let obs = p.observe(&cfg).unwrap();
        assert_eq!(obs.inputs.len(), 15);
        let mean = obs.inputs.iter().sum::<f64>() / 15.0;
        assert!((mean - obs.summaries[0]).abs() < 1e-12);
        assert_eq!(p.simulate(5).unwrap().input_names[0], "y_0");
    }
}
