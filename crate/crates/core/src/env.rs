//! Single-period Volt-Var environment.
//!
//! Each day of the scenario is one episode of 96 steps. The state at a step is the power
//! flow of that step's loads and PV with the previous device setpoints applied; an action
//! replaces the setpoints, and the reward is `r_p + c_v·r_v` from the accurate network.

use std::sync::Arc;

use crate::actionspace::ActionBox;
use crate::error::{Error, Result};
use crate::gridflow::{solve_power_flow, Injections, Network, PowerFlowSolution};
use crate::scenario::ScenarioSet;

pub const DEFAULT_VIOLATION_PENALTY: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageLimits {
    pub v_min: f64,
    pub v_max: f64,
}

impl VoltageLimits {
    pub fn new(v_min: f64, v_max: f64) -> Result<Self> {
        if !(0.0 < v_min && v_min < v_max) {
            return Err(Error::InvalidArgument(format!("invalid voltage limits [{v_min}, {v_max}]")));
        }
        Ok(VoltageLimits { v_min, v_max })
    }
}

impl Default for VoltageLimits {
    fn default() -> Self {
        VoltageLimits { v_min: 0.95, v_max: 1.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    /// Negative active loss, MW.
    pub r_p: f64,
    /// Negative summed limit exceedance, p.u.
    pub r_v: f64,
    pub r: f64,
    pub c_v: f64,
}

impl RewardBreakdown {
    pub fn new(r_p: f64, r_v: f64, c_v: f64) -> Self {
        RewardBreakdown { r_p, r_v, r: r_p + c_v * r_v, c_v }
    }

    pub fn loss(&self) -> f64 {
        -self.r_p
    }

    pub fn violation(&self) -> f64 {
        -self.r_v
    }
}

/// Observation: bus injections and voltages plus current device setpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub q_c: Vec<f64>,
}

impl State {
    pub fn dim(&self) -> usize {
        self.p.len() + self.q.len() + self.v.len() + self.q_c.len()
    }

    pub fn feature_dim(n_bus: usize, n_dev: usize) -> usize {
        3 * n_bus + n_dev
    }

    /// Learning features: powers over the MVA base, `(v − 1)·10`, setpoints over device rating.
    pub fn features(&self, net: &Network) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.dim());
        f.extend(self.p.iter().map(|x| x / net.base_mva));
        f.extend(self.q.iter().map(|x| x / net.base_mva));
        f.extend(self.v.iter().map(|x| (x - 1.0) * 10.0));
        f.extend(self.q_c.iter().zip(&net.devices).map(|(q, d)| q / d.s_mva));
        f
    }
}

/// `−Σ [max(V − V̄, 0) + max(V̲ − V, 0)]`.
pub fn violation_rate(v: &[f64], lim: &VoltageLimits) -> f64 {
    -v.iter()
        .map(|&x| (x - lim.v_max).max(0.0) + (lim.v_min - x).max(0.0))
        .sum::<f64>()
}

/// Exogenous injections with device reactive outputs added at their buses.
pub fn with_device_output(net: &Network, exogenous: &Injections, q_c: &[f64]) -> Result<Injections> {
    if q_c.len() != net.n_devices() {
        return Err(Error::Shape(format!(
            "{} device setpoints for {} devices",
            q_c.len(),
            net.n_devices()
        )));
    }
    let mut inj = exogenous.clone();
    for (bus, q) in net.device_bus_indices().into_iter().zip(q_c) {
        inj.q[bus] += q;
    }
    Ok(inj)
}

/// Solves the power flow for `exogenous + q_c` on `net` and scores it.
pub fn evaluate_action(
    net: &Network,
    exogenous: &Injections,
    q_c: &[f64],
    limits: &VoltageLimits,
    c_v: f64,
) -> Result<(RewardBreakdown, PowerFlowSolution)> {
    let inj = with_device_output(net, exogenous, q_c)?;
    let sol = solve_power_flow(net, &inj)?;
    let reward = RewardBreakdown::new(-sol.loss, violation_rate(&sol.v, limits), c_v);
    Ok((reward, sol))
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub next_state: State,
    /// Last step of the day.
    pub done: bool,
    pub solution: PowerFlowSolution,
}

pub struct VvcEnv {
    net: Arc<Network>,
    scenario: Arc<ScenarioSet>,
    limits: VoltageLimits,
    c_v: f64,
    action_box: ActionBox,
    day: usize,
    step: usize,
    prev_q: Vec<f64>,
}

impl VvcEnv {
    pub fn new(net: Arc<Network>, scenario: Arc<ScenarioSet>, limits: VoltageLimits, c_v: f64) -> Result<Self> {
        if scenario.n_bus != net.n_bus() || scenario.n_dev != net.n_devices() {
            return Err(Error::Shape("scenario shape does not match the network".into()));
        }
        let action_box = ActionBox::from_devices(&net.devices)?;
        let prev_q = vec![0.0; net.n_devices()];
        Ok(VvcEnv {
            net,
            scenario,
            limits,
            c_v,
            action_box,
            day: 0,
            step: 0,
            prev_q,
        })
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn scenario(&self) -> &Arc<ScenarioSet> {
        &self.scenario
    }

    pub fn action_box(&self) -> &ActionBox {
        &self.action_box
    }

    pub fn limits(&self) -> VoltageLimits {
        self.limits
    }

    pub fn c_v(&self) -> f64 {
        self.c_v
    }

    pub fn position(&self) -> (usize, usize) {
        (self.day, self.step)
    }

    pub fn exogenous(&self, day: usize, step: usize) -> Injections {
        self.scenario.injections(&self.net, day, step)
    }

    /// State at `(day, step)` with `prev_q` still applied.
    pub fn observe(&self, day: usize, step: usize, prev_q: &[f64]) -> Result<State> {
        let inj = with_device_output(&self.net, &self.exogenous(day, step), prev_q)?;
        let sol = solve_power_flow(&self.net, &inj)?;
        Ok(State {
            p: sol.p_inj,
            q: sol.q_inj,
            v: sol.v,
            q_c: prev_q.to_vec(),
        })
    }

    /// Starts the day with all setpoints at zero.
    pub fn reset(&mut self, day: usize) -> Result<State> {
        if day >= self.scenario.days {
            return Err(Error::InvalidArgument(format!("day {day} is beyond the scenario ({} days)", self.scenario.days)));
        }
        self.day = day;
        self.step = 0;
        self.prev_q.iter_mut().for_each(|q| *q = 0.0);
        self.observe(day, 0, &self.prev_q)
    }

    /// Reward of `action` at `(day, step)` without advancing the episode.
    pub fn evaluate(&self, day: usize, step: usize, action: &[f64]) -> Result<(RewardBreakdown, PowerFlowSolution)> {
        evaluate_action(&self.net, &self.exogenous(day, step), action, &self.limits, self.c_v)
    }

    /// Applies `action` at the current step. On the last step of the day the returned
    /// next state is the post-action operating point and `done` is set.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if !self.action_box.contains(action) {
            return Err(Error::Contract(format!(
                "action {action:?} outside device box [{:?}, {:?}]",
                self.action_box.low, self.action_box.high
            )));
        }
        let (reward, solution) = self.evaluate(self.day, self.step, action)?;
        self.prev_q.copy_from_slice(action);
        let done = self.step + 1 == self.scenario.steps_per_day;
        let next_state = if done {
            State {
                p: solution.p_inj.clone(),
                q: solution.q_inj.clone(),
                v: solution.v.clone(),
                q_c: action.to_vec(),
            }
        } else {
            self.step += 1;
            self.observe(self.day, self.step, action)?
        };
        Ok(StepOutcome {
            reward,
            next_state,
            done,
            solution,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violation_examples() {
        let lim = VoltageLimits::default();
        assert_eq!(violation_rate(&[0.95, 1.0, 1.05], &lim), 0.0);
        assert!((violation_rate(&[1.06, 1.0], &lim) + 0.01).abs() < 1e-12);
        assert!((violation_rate(&[0.94, 1.07], &lim) + 0.03).abs() < 1e-12);
    }

    #[test]
    fn reward_decomposition_is_exact() {
        let r = RewardBreakdown::new(-0.2, -0.03, 50.0);
        assert_eq!(r.r, -0.2 + 50.0 * -0.03);
        assert_eq!(r.loss(), 0.2);
    }

    #[test]
    fn limits_validated() {
        assert!(VoltageLimits::new(1.05, 0.95).is_err());
        assert!(VoltageLimits::new(0.0, 1.0).is_err());
    }
}
