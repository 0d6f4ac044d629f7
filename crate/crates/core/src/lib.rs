//! Attention-based driving commentary pipeline.
//!
//! An LSTM vehicle controller with spatial attention predicts per-frame
//! acceleration and course change; a temporal-attention language generator
//! turns the controller's attended contexts into a caption of the form
//! `<START> description <sep> explanation <END>`, optionally augmented with
//! a part-of-speech prediction head and special-token penalties in the
//! loss. Captions are scored with corpus-level BLEU and METEOR, separately
//! for the description and explanation parts.
//!
//! The workspace is desk-scale by design: data comes from a deterministic
//! synthetic scenario generator ([`synth`]), and all numerics run on a
//! small reverse-mode autodiff core ([`numerics`]) so that every gradient
//! path is checkable against finite differences.

pub mod cli;
pub mod controller;
pub mod corpus;
pub mod error;
pub mod generator;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
