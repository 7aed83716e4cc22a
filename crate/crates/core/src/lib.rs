//! Style-routed convolutional networks, from scratch.
//!
//! Everything numeric is f64 and deterministic given a seed: a small tensor
//! library with explicit im2col lowering, layer modules with hand-written
//! backward passes, SGD with momentum and a plateau scheduler, three model
//! families (shared-trunk baseline, switched per-style branches, gradient
//! reversal), a synthetic two-style shape dataset, and an experiment harness
//! that reproduces the comparison table across branch depths.

pub mod data;
pub mod error;
pub mod harness;
pub mod layers;
pub mod models;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
