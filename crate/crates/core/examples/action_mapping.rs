//! How a residual pre-action in (−1, 1) becomes a device setpoint around a reference
//! action, for several residual scales, including references near the box edge.
//!
//! cargo run --example action_mapping

use rmvvc::actionspace::{compose, linear_map, map_residual, residual_bounds, ActionBox, ResidualBounds, ResidualConfig};

fn main() -> rmvvc::Result<()> {
    // One inverter (±1.32 MVar) and one SVC (0 to 2 MVar).
    let bx = ActionBox::new(vec![-1.3229, 0.0], vec![1.3229, 2.0])?;
    println!("plain mapping of a_p = [0.5, -0.5]: {:?}", linear_map(&[0.5, -0.5], &bx)?);

    for a_m in [vec![0.2, 1.0], vec![1.25, 1.9]] {
        println!("\nreference a_m = {a_m:?}");
        let wide = ResidualBounds::full_box(&a_m, &bx)?;
        println!("  wide residual box: lo {:.3?} hi {:.3?}", wide.lo, wide.hi);
        for lambda in [0.1, 0.3, 0.8] {
            let cfg = ResidualConfig::from_lambda(lambda, &bx)?;
            let rb = residual_bounds(&a_m, &cfg, &bx)?;
            let corners: Vec<Vec<f64>> = [-0.999, 0.0, 0.999]
                .iter()
                .map(|&p| compose(&a_m, &map_residual(&[p, p], &rb).unwrap(), &bx).unwrap())
                .collect();
            println!(
                "  λ = {lambda}: δ = {:.3?}, residual [{:.3?}, {:.3?}], a for a_rp = −1, 0, 1: {:.3?}",
                cfg.delta, rb.lo, rb.hi, corners
            );
        }
    }
    Ok(())
}
