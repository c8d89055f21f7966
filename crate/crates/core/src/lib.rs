//! Desk-scale simulator and library for error-feedback distributed
//! optimization with contractive gradient compression.
//!
//! The crate implements the EF21 family of methods as exact single-process
//! simulations of the master/worker protocol: the plain method plus its
//! stochastic-gradient, variance-reduced (PAGE), partial-participation,
//! bidirectionally compressed, heavy-ball and proximal variants. Around the
//! engines sit the supporting pieces: compression operators with exact bit
//! accounting, logistic-regression and least-squares oracles, LibSVM data
//! loading and client partitioning, the theory-prescribed stepsizes, and an
//! experiment harness with stepsize-multiplier tuning and CSV/JSON metric
//! emission.
//!
//! Everything is deterministic given a root seed: rerunning a configuration
//! reproduces its outputs byte for byte.

pub mod compressor;
pub mod data;
pub mod engine;
pub mod error;
pub mod harness;
pub mod problem;
pub mod rng;
pub mod spectral;
pub mod stepsize;
pub mod vector;
pub mod verify;

pub use error::{Error, Result};
pub use vector::DenseVector;
