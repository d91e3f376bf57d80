//! Core algorithms for uncertainty-aware end-to-end steering.
//!
//! Everything here is pure computation over in-memory values and builds
//! without the standard library (an allocator is required). File formats,
//! wall-clock timing and the command-line front end live in the `dropdrive`
//! crate.
//!
//! Module map:
//! - [`nn`]: tensors, convolutional networks, deterministic and dropout
//!   forward passes, backpropagation and SGD training.
//! - [`uncertainty`]: Monte-Carlo dropout sampling and the predictive
//!   mean/variance, variation ratio, predictive entropy and mutual
//!   information summaries, plus model-precision calibration.
//! - [`sim`]: a headless 2-D driving world with camera rendering, crash
//!   detection, a pure-pursuit expert and a geometric safety oracle.
//! - [`data`]: dataset collection, mirroring, angle bucketing and splits.
//! - [`eval`]: ROC/AUC, threshold selection, the static safe/unsafe metric
//!   and the seconds-before-crash metric.
//! - [`monitor`]: the closed-loop monitored drive and alert replay.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
mod error;
pub mod eval;
pub mod math;
pub mod monitor;
pub mod nn;
pub mod rng;
pub mod serde_ext;
pub mod sim;
pub mod tensor;
pub mod uncertainty;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Steering limit of the simulated car, in degrees.
pub const MAX_STEER_DEG: f64 = 25.0;
