//! Soft actor-critic over residual pre-actions, and the day-by-day training loop.

mod replay;
mod sac;
mod trainer;

pub use replay::{Batch, MdpTransition, ReplayBuffer};
pub use sac::{ActMode, SacAgent, SacConfig, UpdateStats};
pub use trainer::{evaluate_day, train_day_loop, ResidualSpec, StepLog};
