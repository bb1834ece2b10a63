use rmvvc::agent::{ActMode, MdpTransition, SacAgent, SacConfig};

/// Optimum of the bandit reward `−(a − 0.5)²`.
pub const BANDIT_OPTIMUM: f64 = 0.5;

pub fn bandit_config() -> SacConfig {
    SacConfig {
        hidden: vec![64, 64],
        actor_lr: 1e-3,
        critic_lr: 1e-3,
        alpha_lr: 1e-3,
        batch_size: 64,
        buffer_capacity: 5000,
        random_steps: 200,
        updates_per_step: 1,
        reward_scale: 1.0,
        ..SacConfig::default()
    }
}

/// Trains a one-dimensional agent on a stateless bandit and returns its deterministic action.
pub fn train_bandit(steps: usize, seed: u64) -> f64 {
    let mut agent = SacAgent::new(1, 1, bandit_config(), seed).unwrap();
    let s = vec![1.0];
    for _ in 0..steps {
        let a = agent.act(&s, ActMode::Train).unwrap();
        let r = -(a[0] - BANDIT_OPTIMUM).powi(2);
        agent
            .remember(MdpTransition {
                s: s.clone(),
                a_rp: a,
                r,
                s_next: s.clone(),
                done: true,
            })
            .unwrap();
        agent.train_step().unwrap();
    }
    agent.act_eval(&s).unwrap()[0]
}
