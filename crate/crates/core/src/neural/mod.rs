//! Small dense networks for the agents: a ReLU MLP with hand-written backprop, Adam,
//! a tanh-squashed Gaussian policy head and a plain-text checkpoint format.

mod adam;
mod mlp;
mod policy;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{load_checkpoint, save_checkpoint, Mlp, MlpGrads};
pub use policy::{deterministic_action, policy_grad, policy_sample, PolicySample, LOG_STD_MAX, LOG_STD_MIN};
