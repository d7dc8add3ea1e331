//! frostlab: a continual-retraining laboratory on a small CPU autodiff
//! core.
//!
//! The crate trains a LeNet-with-batchnorm classifier, then retrains it
//! under buffered data protocols (half-original/half-augmented, or
//! split-by-class) with a roster of strategies: plain fine-tuning,
//! train-from-scratch, importance-penalty regularization (diagonal
//! Fisher, MAS), a boosted ensemble trained on softmax residuals, and
//! multiplicative frosting with a lossless merge.

pub mod autograd;
pub mod data;
pub mod error;
pub mod loss;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod strategies;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{NodeId, Tensor, TensorT};
