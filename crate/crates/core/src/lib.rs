//! Deterministic federated-learning simulation with label-variance client
//! selection.

pub mod data;
pub mod error;
pub mod federation;
pub mod labelstats;
pub mod metrics;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
