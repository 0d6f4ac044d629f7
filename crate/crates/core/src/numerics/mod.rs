//! Minimal differentiable-computation core: 64-bit tensors, a reverse-mode
//! tape covering exactly the operations the model needs, the Adam
//! optimizer with an exponential staircase learning-rate schedule, a
//! bit-exact checkpoint format, and a finite-difference gradient checker.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, GradCheckOpts, GradCheckReport};
pub use graph::{Graph, Node};
pub use optim::{adam_step, adam_step_filtered, AdamState, LrSchedule};
pub use params::ParamStore;
pub use tensor::Tensor;

/// Additive term inside every log so confident wrong predictions stay finite.
pub const LOG_EPS: f64 = 1e-12;
