//! The squashed Gaussian policy head: samples, log-densities and the gradient that flows
//! back into the network outputs.
//!
//! cargo run --example policy_head

use ndarray::array;
use rmvvc::neural::{deterministic_action, policy_grad, policy_sample};

fn main() -> rmvvc::Result<()> {
    // Two rows, one action dimension: [μ | log σ].
    let out = array![[0.3, -1.0], [2.5, 0.5]];
    let xi = array![[0.4], [-1.2]];
    let s = policy_sample(out.view(), xi.view())?;
    println!("deterministic tanh(μ): {}", deterministic_action(out.view())?);
    println!("sampled actions:       {}", s.action);
    println!("log-densities:         {}", s.logp);

    // Gradient of Σ a + Σ log π with respect to [μ | log σ].
    let d_a = array![[1.0], [1.0]];
    let d_logp = array![1.0, 1.0];
    println!("d(Σa + Σlogπ)/d out:  {}", policy_grad(&s, d_a.view(), d_logp.view())?);
    Ok(())
}
