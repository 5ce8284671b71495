//! Perceptual distances between visualization images from deep CNN features,
//! with pixel-space baselines and the evaluation tools to compare them against
//! human judgments: consensus distances, Ward clustering, cluster agreement
//! measures, rank correlation and bootstrap intervals.
//!
//! The network forward pass is implemented here on plain `f32` tensors; weights
//! come from portable archives (see [`nn::archive`]).

// Guards like `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod metric;
pub mod nn;
pub mod preprocess;
pub mod stimuli;
pub mod tensor;

pub use error::{Error, Result};
pub use matrix::DistanceMatrix;
pub use tensor::Tensor;
