//! Point-cloud scene completion with nearest-neighbor flow matching.
//!
//! A partial scan is replicated and jittered into an initial cloud, and a
//! learned per-point vector field carries that cloud onto the complete scene
//! in a few Euler steps. Training regresses the field against straight-line
//! flows toward nearest neighbors in the target scene, optionally with a
//! Chamfer term on the one-step prediction.

pub mod checkpoint;
pub mod coupling;
mod error;
pub mod field;
pub mod geometry;
pub mod metrics;
pub mod objective;
pub mod rng;
pub mod sampler;
pub mod scenes;
pub mod train;

pub use checkpoint::Checkpoint;
pub use coupling::{init_noisy, nn_flow, Condition, ConditionKind, FlowSample, NoiseConfig};
pub use error::{Error, Result};
pub use field::{AdamConfig, FieldConfig, ModelState, OptimizerState, VectorField};
pub use geometry::{Point3, PointCloud};
pub use metrics::{EvalReport, MetricsConfig};
pub use objective::{LossReport, LossWeights, ObjectiveConfig};
pub use sampler::{complete_scene, euler_integrate, FieldView, SamplerConfig, Trajectory, VelocityField};
pub use train::{TrainConfig, TrainPair, Trainer};
