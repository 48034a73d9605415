//! Simulation and statistical verification of branching random walks in
//! the boundary case.
//!
//! The crate simulates supercritical branching random walks whose offspring
//! law is normalized so that the exponentially weighted particle sum is a
//! mean-one martingale with zero weighted drift. On top of the simulated
//! forests it computes the additive and derivative martingales, the polymer
//! measure on leaves with its overlap statistics, the tilted
//! one-dimensional walk with its renewal function and barrier-conditioned
//! transform, spinal decomposition samplers, and Brownian-meander reference
//! laws. Everything is deterministic given a seed, including under
//! parallel execution.

pub mod error;
pub mod forest;
pub mod martingale;
pub mod meander;
pub mod model;
pub mod polymer;
pub mod rng;
pub mod spine;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
