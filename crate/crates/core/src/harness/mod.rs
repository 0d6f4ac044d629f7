//! Training loop, evaluation, the four-variant ablation, qualitative
//! reporting, and whole-model gradient verification.

pub mod ablate;
pub mod config;
pub mod eval;
pub mod train;
pub mod verify;

pub use ablate::{ablate, render_wide_table, sweep, AblationVariant};
pub use config::{Staging, TrainConfig};
pub use eval::{evaluate, qualitative_report, EvalReport, QualitativeSample, SampleEval};
pub use train::{build_vocab_for, train, NormStats, StepLog, TrainOutcome};
pub use verify::{verify_gradients, VerifyReport};
