//! Rate-optimal quantization schedules for finite-horizon distributed
//! average consensus.
//!
//! The crate is organized around one pipeline:
//!
//! 1. [`graph`] builds a communication topology (random geometric graphs on
//!    the unit torus, or explicit edge lists) and its Metropolis weight
//!    matrix.
//! 2. [`state_evolution`] propagates the exact first and second moments of
//!    the node states and consensus errors under the quantized update
//!    `z(t+1) = z(t) + (W - I) Q(z(t))`, and extracts the affine
//!    (posynomial) dependence of every variance and MSE on the per-node,
//!    per-iteration distortions.
//! 3. [`rate_model`] maps distortions to coding rates through an
//!    operational rate-distortion relationship with saturation at zero.
//! 4. [`optimizer`] minimizes the aggregate coding rate subject to an MSE
//!    budget at the horizon, in the log-transformed convex form, with a
//!    brute-force grid oracle for small instances.
//! 5. [`simulator`] runs seeded Monte-Carlo consensus with concrete
//!    quantizers and measures empirical MSE and empirical entropy rates.
//!
//! All randomness is derived from explicit seeds through counter-based key
//! derivation ([`rng`]), so every result in the crate is reproducible
//! bit-for-bit, including under parallel execution.

pub mod error;
pub mod graph;
pub mod optimizer;
pub mod rate_model;
pub mod rng;
pub mod simulator;
pub mod state_evolution;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
