//! Volt-Var control on radial distribution feeders with soft actor-critic agents that
//! learn residual corrections on top of a reference-model dispatch.

pub mod actionspace;
pub mod agent;
pub mod env;
pub mod error;
pub mod gridflow;
pub mod harness;
pub mod neural;
pub mod refopt;
pub mod scenario;

pub use error::{Error, Result};
