//! Adaptive MCMC engine.
//!
//! One sweep applies, in order: univariate adaptive random-walk Metropolis
//! updates on every coordinate, a joint block update of each group's
//! (phi, kappa1, kappa2) trio, and the two transformed-coordinate moves that
//! step the weakly identified directions. Proposal scales and the block
//! covariance adapt only during burn-in, so retained draws come from fixed
//! Markov kernels.

mod adapt;
mod engine;
pub mod moves;
mod target;

pub use engine::{
    run_chains, run_chains_with_inits, ChainConfig, ChainResult, SamplerSuite,
};
pub use target::{CoordKind, GroupCoords, PhiView, Target};
