//! Single-period SAC on a one-step bandit with reward −(a − 0.5)².
//!
//! cargo run --example bandit

use rmvvc::agent::{ActMode, MdpTransition, SacAgent, SacConfig};

fn main() -> rmvvc::Result<()> {
    let cfg = SacConfig {
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
    };
    let mut agent = SacAgent::new(1, 1, cfg, 7)?;
    let s = vec![1.0];
    for step in 1..=3000 {
        let a = agent.act(&s, ActMode::Train)?;
        let r = -(a[0] - 0.5).powi(2);
        agent.remember(MdpTransition {
            s: s.clone(),
            a_rp: a,
            r,
            s_next: s.clone(),
            done: true,
        })?;
        let stats = agent.train_step()?;
        if step % 500 == 0 {
            println!(
                "step {step:5}: tanh(μ) = {:.4}, α = {:.2e}, critic loss {:.2e}",
                agent.act_eval(&s)?[0],
                agent.alpha(),
                stats.map_or(f64::NAN, |s| s.critic_loss)
            );
        }
    }
    Ok(())
}
