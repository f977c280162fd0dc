//! Two-scale shape optimization: ground-truth evaluations at a sparse set of
//! neighbourhood centres, a quadratic surrogate on each neighbourhood, a
//! self-consistent Metropolis value function on the surrogate, and
//! per-dimension freezing of parameters whose surrogate variation is small.

pub mod config;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod geometry;
pub mod grid_mdp;
pub mod reduction;
pub mod value;

pub use error::{Error, Result};
