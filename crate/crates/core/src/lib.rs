//! Treatment allocation for sequential binary-choice games on networks.
//!
//! The stationary law of the game is a Gibbs distribution over outcome
//! profiles. Welfare under an allocation is approximated with a naive
//! mean-field fixed point and maximised greedily under a capacity
//! constraint; exact enumeration and MCMC are provided for validation.

pub mod allocate;
pub mod bounds;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod format;
pub mod meanfield;
pub mod model;
pub mod network;
pub mod seed;

pub use error::{Error, Result};
