//! Configuration-driven experiment driver: problem setup, the inference
//! pipeline and persistence of its outputs.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod problem;

pub use config::{ExperimentConfig, ProblemKind};
pub use error::{HarnessError, HarnessResult};
pub use pipeline::{run_experiment, Context, RunArtifact};
