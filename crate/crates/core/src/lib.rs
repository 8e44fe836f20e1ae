//! Kernel mean embedding surrogates for likelihood-free inference.
//!
//! A set of `(θ_j, x_j)` simulations and an observed summary `y` define a
//! regularized kernel regression of the ε-kernel likelihood onto parameter
//! space. From it follow a surrogate likelihood, its normalizing constant
//! (used to learn the kernel scales), a surrogate posterior density, and a
//! posterior mean embedding that can be herded into super-samples.

pub mod embedding;
pub mod error;
pub mod herding;
pub mod kernels;
pub mod learning;
pub mod rng;
pub mod surrogate;
pub mod transforms;

pub use embedding::{EmbeddingMode, GaussianPrior, PriorEmbedder, PriorSampleSet};
pub use error::{Error, Result};
pub use herding::{candidates_from_prior, herd, herding_mmd, CandidateSet, SuperSampleSet};
pub use kernels::{EpsKernelKind, EpsKernelSpec, LengthScales};
pub use learning::{learn_ard_eps, learn_scales, mkml_objective, mkml_surface, LearningConfig};
pub use surrogate::{Hyperparameters, ModelOptions, SimulationSet, SurrogateState};
pub use transforms::{MarginalSpec, MarginalTransform};
