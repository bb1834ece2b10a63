//! Radial network model and balanced AC power flow.
//!
//! Networks are trees rooted at the slack bus. Power flow uses a backward/forward
//! sweep over the cached tree ordering; branch shunts are not modelled.

mod cases;
mod network;
mod sweep;

pub use cases::CaseId;
pub use network::{load_network, scale_impedances, Branch, Bus, Network};
pub use sweep::{solve_power_flow, total_loss, Injections, PowerFlowSolution, MAX_ITERATIONS, MISMATCH_TOL};
