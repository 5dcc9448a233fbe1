//! Class-forgetting toolkit built around a small, self-contained CNN engine.
//!
//! The pipeline trains an original model on a labeled image dataset, erases a
//! requested forget set by distilling toward a randomly initialized teacher,
//! reconstructs accuracy on the remaining data by distilling from the
//! original model, and benchmarks the result against retraining from scratch.
//!
//! Everything is driven by a single master seed: given the same config, two
//! runs produce bitwise-identical parameters, checkpoints, and reports.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod loss;
pub mod net;
pub mod optim;
pub mod seed;
pub mod tensor;
pub mod unlearn;

pub use error::{Error, Result};
pub use seed::RngSeed;
pub use tensor::Tensor;
