use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::replay::{Batch, MdpTransition, ReplayBuffer};
use crate::error::{Error, Result};
use crate::neural::{deterministic_action, policy_grad, policy_sample, AdamConfig, AdamState, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps with uniform random pre-actions before the policy acts.
    pub random_steps: usize,
    pub updates_per_step: usize,
    pub initial_alpha: f64,
    /// 0 selects the single-period critic target.
    pub gamma: f64,
    /// Target-critic smoothing in discounted mode.
    pub polyak: f64,
    /// Rewards are multiplied by this before they reach the critics.
    pub reward_scale: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            hidden: vec![512, 512],
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            batch_size: 128,
            buffer_capacity: 30_000,
            random_steps: 960,
            updates_per_step: 4,
            initial_alpha: 0.01,
            gamma: 0.0,
            polyak: 0.995,
            reward_scale: 0.1,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if [self.actor_lr, self.critic_lr, self.alpha_lr].iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.updates_per_step == 0 {
            return bad("batch size, buffer capacity and updates per step must be positive");
        }
        if !(self.initial_alpha > 0.0 && self.initial_alpha.is_finite()) {
            return bad("initial temperature must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return bad("polyak must lie in [0, 1]");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward scale must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Train,
    Eval,
}

/// Averages over the update triplets of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub updates: usize,
}

#[derive(Clone)]
pub struct SacAgent {
    cfg: SacConfig,
    state_dim: usize,
    action_dim: usize,
    actor: Mlp,
    critics: [Mlp; 2],
    targets: Option<[Mlp; 2]>,
    actor_opt: AdamState,
    critic_opt: [AdamState; 2],
    log_alpha: f64,
    alpha_opt: AdamState,
    target_entropy: f64,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    env_steps: usize,
}

fn critic_input(s: ArrayView2<f64>, a: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[s, a]).expect("batch rows agree")
}

fn check_finite(what: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl SacAgent {
    pub fn new(state_dim: usize, action_dim: usize, cfg: SacConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::InvalidArgument("state and action dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = |i: usize, o: usize| {
            let mut v = vec![i];
            v.extend(&cfg.hidden);
            v.push(o);
            v
        };
        let actor = Mlp::new(&layers(state_dim, 2 * action_dim), &mut rng)?;
        let critics = [
            Mlp::new(&layers(state_dim + action_dim, 1), &mut rng)?,
            Mlp::new(&layers(state_dim + action_dim, 1), &mut rng)?,
        ];
        let targets = (cfg.gamma > 0.0).then(|| critics.clone());
        let actor_opt = AdamState::new(AdamConfig::with_lr(cfg.actor_lr), &actor.param_lens());
        let critic_opt = [
            AdamState::new(AdamConfig::with_lr(cfg.critic_lr), &critics[0].param_lens()),
            AdamState::new(AdamConfig::with_lr(cfg.critic_lr), &critics[1].param_lens()),
        ];
        Ok(SacAgent {
            state_dim,
            action_dim,
            actor,
            critics,
            targets,
            actor_opt,
            critic_opt,
            log_alpha: cfg.initial_alpha.ln(),
            alpha_opt: AdamState::new(AdamConfig::with_lr(cfg.alpha_lr), &[1]),
            target_entropy: -(action_dim as f64),
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            rng,
            env_steps: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.log_alpha = alpha.ln();
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critics(&self) -> &[Mlp; 2] {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut [Mlp; 2] {
        &mut self.critics
    }

    pub fn has_target_critics(&self) -> bool {
        self.targets.is_some()
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.state_dim {
            return Err(Error::Shape(format!("state has {} features, agent expects {}", s.len(), self.state_dim)));
        }
        Ok(())
    }

    /// Residual pre-action for `s`. Train mode counts as one environment step: uniform
    /// noise during the random phase, then a policy sample.
    pub fn act(&mut self, s: &[f64], mode: ActMode) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let x = ArrayView2::from_shape((1, self.state_dim), s).expect("length checked");
        match mode {
            ActMode::Eval => self.act_eval(s),
            ActMode::Train => {
                let warmup = self.env_steps < self.cfg.random_steps;
                self.env_steps += 1;
                if warmup {
                    return Ok((0..self.action_dim).map(|_| self.open_uniform()).collect());
                }
                let out = self.actor.predict(x)?;
                let xi = self.normal_noise(1);
                Ok(policy_sample(out.view(), xi.view())?.action.row(0).to_vec())
            }
        }
    }

    /// Deterministic `tanh(μ)`; touches neither the RNG nor the step counter.
    pub fn act_eval(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let x = ArrayView2::from_shape((1, self.state_dim), s).expect("length checked");
        Ok(deterministic_action(self.actor.predict(x)?.view())?.row(0).to_vec())
    }

    fn open_uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random_range(-1.0..1.0);
            if u > -1.0 {
                return u;
            }
        }
    }

    fn normal_noise(&mut self, rows: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, self.action_dim), |_| self.rng.sample(StandardNormal))
    }

    pub fn remember(&mut self, t: MdpTransition) -> Result<()> {
        self.check_state(&t.s)?;
        if t.a_rp.len() != self.action_dim {
            return Err(Error::Shape("stored pre-action has the wrong dimension".into()));
        }
        self.buffer.push(t)
    }

    pub fn sample_batch(&mut self) -> Result<Batch> {
        self.buffer.sample(self.cfg.batch_size, &mut self.rng)
    }

    /// Critic regression targets for `batch`, in scaled reward units: the reward itself in
    /// single-period mode, else the soft Bellman target.
    pub fn critic_targets(&mut self, batch: &Batch) -> Result<Array1<f64>> {
        if self.cfg.gamma > 0.0 {
            self.bellman_targets(batch, self.cfg.gamma)
        } else {
            Ok(&batch.r * self.cfg.reward_scale)
        }
    }

    /// `y = r + γ(1 − d)(min_j Q'_j(s′, ã′) − α·log π(ã′|s′))` with `ã′` drawn from the current
    /// policy. Q' are the target critics when present, else the online ones.
    pub fn bellman_targets(&mut self, batch: &Batch, gamma: f64) -> Result<Array1<f64>> {
        let alpha = self.alpha();
        let out = self.actor.predict(batch.s_next.view())?;
        let xi = self.normal_noise(batch.len());
        let next = policy_sample(out.view(), xi.view())?;
        let input = critic_input(batch.s_next.view(), next.action.view());
        let critics = self.targets.as_ref().unwrap_or(&self.critics);
        let q1 = critics[0].predict(input.view())?;
        let q2 = critics[1].predict(input.view())?;
        let mut y = &batch.r * self.cfg.reward_scale;
        for i in 0..y.len() {
            let soft = q1[[i, 0]].min(q2[[i, 0]]) - alpha * next.logp[i];
            y[i] += gamma * (1.0 - batch.done[i]) * soft;
        }
        Ok(y)
    }

    /// Mean over both critics of `mean[(Q_k(s, a) − y)²]`, without updating anything.
    pub fn critic_loss(&self, batch: &Batch, y: &Array1<f64>) -> Result<f64> {
        let input = critic_input(batch.s.view(), batch.a.view());
        let mut total = 0.0;
        for critic in &self.critics {
            let q = critic.predict(input.view())?;
            total += (&q.column(0) - y).mapv(|e| e * e).mean().unwrap_or(0.0);
        }
        Ok(total / 2.0)
    }

    /// One Adam step on each critic toward the targets; returns the mean of the two losses.
    pub fn critic_update(&mut self, batch: &Batch) -> Result<f64> {
        let y = self.critic_targets(batch)?;
        self.critic_update_toward(batch, &y)
    }

    pub fn critic_update_toward(&mut self, batch: &Batch, y: &Array1<f64>) -> Result<f64> {
        let input = critic_input(batch.s.view(), batch.a.view());
        let n = batch.len() as f64;
        let mut total = 0.0;
        for k in 0..2 {
            let q = self.critics[k].forward(input.view())?;
            let err = &q.column(0) - y;
            let loss = check_finite("critic loss", err.mapv(|e| e * e).sum() / n)?;
            let grad = (err * (2.0 / n)).insert_axis(Axis(1));
            let grads = self.critics[k].backward_params(grad.view())?;
            let mut params = self.critics[k].param_slices_mut();
            self.critic_opt[k].step(&mut params, &grads.slices())?;
            total += loss;
        }
        if let Some(targets) = self.targets.as_mut() {
            for k in 0..2 {
                targets[k].soft_update_from(&self.critics[k], self.cfg.polyak)?;
            }
        }
        Ok(total / 2.0)
    }

    /// Actor loss `mean[α·logπ − min_j Q_j(s, ã)]` with `ã` a fresh reparameterised sample.
    /// Returns the loss and the sample's log-probabilities.
    pub fn actor_update(&mut self, batch: &Batch) -> Result<(f64, Array1<f64>)> {
        let xi = self.normal_noise(batch.len());
        self.actor_update_with_noise(batch, xi.view())
    }

    pub fn actor_update_with_noise(&mut self, batch: &Batch, xi: ArrayView2<f64>) -> Result<(f64, Array1<f64>)> {
        let alpha = self.alpha();
        let n = batch.len();
        let out = self.actor.forward(batch.s.view())?;
        let sample = policy_sample(out.view(), xi)?;
        let input = critic_input(batch.s.view(), sample.action.view());
        let q1 = self.critics[0].forward(input.view())?;
        let q2 = self.critics[1].forward(input.view())?;
        let mut pick1 = Array2::zeros((n, 1));
        let mut pick2 = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for i in 0..n {
            let (a, b) = (q1[[i, 0]], q2[[i, 0]]);
            if a <= b {
                pick1[[i, 0]] = -1.0 / n as f64;
            } else {
                pick2[[i, 0]] = -1.0 / n as f64;
            }
            loss += alpha * sample.logp[i] - a.min(b);
        }
        let loss = check_finite("actor loss", loss / n as f64)?;
        let g1 = self.critics[0].input_grad(pick1.view())?;
        let g2 = self.critics[1].input_grad(pick2.view())?;
        let d_action = (&g1 + &g2).slice(s![.., self.state_dim..]).to_owned();
        let d_logp = Array1::from_elem(n, alpha / n as f64);
        let d_out = policy_grad(&sample, d_action.view(), d_logp.view())?;
        let grads = self.actor.backward_params(d_out.view())?;
        let mut params = self.actor.param_slices_mut();
        self.actor_opt.step(&mut params, &grads.slices())?;
        Ok((loss, sample.logp))
    }

    /// One Adam step on log α for `L(α) = mean[−α·logπ − α·H]`, using log-probs of the
    /// current policy. Returns the new α.
    pub fn temperature_update_from_logp(&mut self, logp: ArrayView1<f64>) -> Result<f64> {
        if logp.is_empty() {
            return Err(Error::InvalidArgument("temperature update on an empty batch".into()));
        }
        let mean = logp.mean().expect("non-empty");
        let grad = check_finite("temperature gradient", -self.alpha() * (mean + self.target_entropy))?;
        let mut p = [self.log_alpha];
        self.alpha_opt.step(&mut [&mut p[..]], &[&[grad][..]])?;
        self.log_alpha = p[0];
        Ok(self.alpha())
    }

    /// Temperature step with a fresh policy sample on `batch`.
    pub fn temperature_update(&mut self, batch: &Batch) -> Result<f64> {
        let out = self.actor.predict(batch.s.view())?;
        let xi = self.normal_noise(batch.len());
        let sample = policy_sample(out.view(), xi.view())?;
        self.temperature_update_from_logp(sample.logp.view())
    }

    /// Runs the per-step update triplets once the random phase is over and the buffer
    /// holds at least one batch. `None` when no update ran.
    pub fn train_step(&mut self) -> Result<Option<UpdateStats>> {
        if self.env_steps < self.cfg.random_steps || self.buffer.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let mut critic = 0.0;
        let mut actor = 0.0;
        for _ in 0..self.cfg.updates_per_step {
            let batch = self.sample_batch()?;
            critic += self.critic_update(&batch)?;
            let (loss, logp) = self.actor_update(&batch)?;
            actor += loss;
            self.temperature_update_from_logp(logp.view())?;
        }
        let k = self.cfg.updates_per_step as f64;
        Ok(Some(UpdateStats {
            critic_loss: critic / k,
            actor_loss: actor / k,
            alpha: self.alpha(),
            updates: self.cfg.updates_per_step,
        }))
    }
}
