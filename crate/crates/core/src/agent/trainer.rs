use crate::actionspace::{compose, map_residual, residual_bounds, ResidualBounds, ResidualConfig};
use crate::agent::{ActMode, MdpTransition, SacAgent};
use crate::env::VvcEnv;
use crate::error::{Error, Result};

/// How the residual interval around the reference action is built each step.
#[derive(Debug, Clone, PartialEq)]
pub enum ResidualSpec {
    /// No reference: `a_m ≡ 0` and the residual spans the device box.
    Plain,
    /// Reference action with the residual box `[a̲ − a_m, ā − a_m]`.
    Wide,
    /// Reference action with half-width δ, clipped at the box edges.
    Scaled(ResidualConfig),
}

impl ResidualSpec {
    pub fn uses_reference(&self) -> bool {
        !matches!(self, ResidualSpec::Plain)
    }

    fn bounds(&self, a_m: &[f64], env: &VvcEnv) -> Result<ResidualBounds> {
        match self {
            ResidualSpec::Plain | ResidualSpec::Wide => ResidualBounds::full_box(a_m, env.action_box()),
            ResidualSpec::Scaled(cfg) => residual_bounds(a_m, cfg, env.action_box()),
        }
    }
}

/// One environment step of a run. `test_*` come from the end-of-day deterministic pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub day: usize,
    pub step: usize,
    pub train_reward: f64,
    pub test_reward: f64,
    pub test_ploss: f64,
    pub test_violation: f64,
    /// Mean over this step's updates; NaN when none ran.
    pub critic_loss: f64,
    /// NaN when no update ran yet.
    pub alpha: f64,
    pub reference_action_norm: f64,
}

fn reference_for<'r>(
    spec: &ResidualSpec,
    reference: Option<&'r [Vec<f64>]>,
    zeros: &'r [f64],
    global: usize,
) -> Result<&'r [f64]> {
    if !spec.uses_reference() {
        return Ok(zeros);
    }
    let table = reference.ok_or_else(|| Error::InvalidArgument("residual mode needs reference actions".into()))?;
    table
        .get(global)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::InvalidArgument(format!("no reference action for global step {global}")))
}

fn executed_action(
    env: &VvcEnv,
    spec: &ResidualSpec,
    a_m: &[f64],
    a_rp: &[f64],
) -> Result<Vec<f64>> {
    let bounds = spec.bounds(a_m, env)?;
    let a_r = map_residual(a_rp, &bounds)?;
    let a = compose(a_m, &a_r, env.action_box())?;
    if !env.action_box().contains(&a) {
        return Err(Error::Contract(format!("composed action {a:?} left the device box")));
    }
    Ok(a)
}

/// Deterministic policy pass over one day. Writes the `test_*` fields of `logs`, which must
/// hold that day's steps in order.
pub fn evaluate_day(
    env: &VvcEnv,
    agent: &SacAgent,
    spec: &ResidualSpec,
    reference: Option<&[Vec<f64>]>,
    day: usize,
    logs: &mut [StepLog],
) -> Result<()> {
    let steps = env.scenario().steps_per_day;
    if logs.len() != steps {
        return Err(Error::Shape(format!("{} log rows for a {steps}-step day", logs.len())));
    }
    let net = env.network().clone();
    let zeros = vec![0.0; env.action_box().dim()];
    let mut prev_q = zeros.clone();
    for (step, row) in logs.iter_mut().enumerate() {
        let a_m = reference_for(spec, reference, &zeros, day * steps + step)?;
        let state = env.observe(day, step, &prev_q)?;
        let a_rp = agent.act_eval(&state.features(&net))?;
        let a = executed_action(env, spec, a_m, &a_rp)?;
        let (reward, _) = env.evaluate(day, step, &a)?;
        row.test_reward = reward.r;
        row.test_ploss = reward.loss();
        row.test_violation = reward.violation();
        prev_q = a;
    }
    Ok(())
}

/// Runs `days` days of interaction and learning, evaluating at the end of each day.
/// `reference` holds `a_m` per global step (`day·96 + step`) and is unused in plain mode.
/// `on_day` receives each finished day's rows, so a failure later keeps earlier days.
pub fn train_day_loop(
    env: &mut VvcEnv,
    agent: &mut SacAgent,
    spec: &ResidualSpec,
    reference: Option<&[Vec<f64>]>,
    days: usize,
    mut on_day: impl FnMut(&[StepLog]) -> Result<()>,
) -> Result<Vec<StepLog>> {
    if days > env.scenario().days {
        return Err(Error::InvalidArgument(format!("{days} days requested, scenario has {}", env.scenario().days)));
    }
    let dim = env.action_box().dim();
    if agent.action_dim() != dim {
        return Err(Error::Shape("agent action dimension differs from the device count".into()));
    }
    let net = env.network().clone();
    let steps = env.scenario().steps_per_day;
    let zeros = vec![0.0; dim];
    let mut logs = Vec::with_capacity(days * steps);
    let mut alpha = f64::NAN;
    for day in 0..days {
        let mut features = env.reset(day)?.features(&net);
        for step in 0..steps {
            let a_m = reference_for(spec, reference, &zeros, day * steps + step)?;
            let a_rp = agent.act(&features, ActMode::Train)?;
            let a = executed_action(env, spec, a_m, &a_rp)?;
            let out = env.step(&a)?;
            let next_features = out.next_state.features(&net);
            agent.remember(MdpTransition {
                s: features,
                a_rp,
                r: out.reward.r,
                s_next: next_features.clone(),
                done: out.done,
            })?;
            let stats = agent.train_step()?;
            if let Some(st) = stats {
                alpha = st.alpha;
            }
            logs.push(StepLog {
                day,
                step,
                train_reward: out.reward.r,
                test_reward: f64::NAN,
                test_ploss: f64::NAN,
                test_violation: f64::NAN,
                critic_loss: stats.map_or(f64::NAN, |s| s.critic_loss),
                alpha,
                reference_action_norm: a_m.iter().map(|x| x * x).sum::<f64>().sqrt(),
            });
            features = next_features;
        }
        let start = day * steps;
        evaluate_day(env, agent, spec, reference, day, &mut logs[start..start + steps])?;
        on_day(&logs[start..start + steps])?;
        log::debug!(
            "day {day}: train {:.4} test {:.4}",
            logs[start..].iter().map(|r| r.train_reward).sum::<f64>(),
            logs[start..].iter().map(|r| r.test_reward).sum::<f64>()
        );
    }
    Ok(logs)
}
