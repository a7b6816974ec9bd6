//! Diffusion probabilistic models for graph-structured prediction.
//!
//! The crate trains a message-passing denoiser to reverse a Gaussian
//! diffusion over node-wise or edge-wise targets, and predicts by running the
//! learned reverse chain. Beyond the fully supervised setting it provides:
//!
//! - semi-supervised training on a partially labeled graph through
//!   variational EM with a FIFO buffer of sampled completions and
//!   manifold-constrained conditional sampling ([`em`]);
//! - algorithmic-reasoning tasks over all node pairs with exact oracles
//!   ([`reasoning`]);
//! - a small dense reverse-mode differentiation engine that every network is
//!   trained with ([`autodiff`]).
//!
//! All randomness flows from [`rng::SeededRng`], so a run is a pure function
//! of its configuration and seed.

pub mod autodiff;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod diffusion;
pub mod em;
mod error;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod reasoning;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
