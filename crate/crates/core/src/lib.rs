//! Sampling-based stochastic search for multi-agent model predictive control,
//! with an ADMM consensus layer for distributed planning.

pub mod bench;
pub mod consensus;
pub mod cost;
pub mod dynamics;
pub mod mpc;
pub mod sampler;
