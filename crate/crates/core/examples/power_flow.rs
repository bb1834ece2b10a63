//! Base-case power flow on the bundled feeders, plus the effect of a reference-model
//! impedance error on the 33-bus voltages.
//!
//! cargo run --example power_flow

use rmvvc::gridflow::{scale_impedances, solve_power_flow, CaseId, Injections};

fn main() -> rmvvc::Result<()> {
    for case in CaseId::ALL {
        let net = case.network()?;
        let sol = solve_power_flow(&net, &Injections::base_loads(&net))?;
        let (i_min, v_min) = sol
            .v
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
        println!(
            "{case}: {} buses, {} devices, loss {:.4} MW, min |V| {:.4} p.u. at bus {}, {} sweeps",
            net.n_bus(),
            net.n_devices(),
            sol.loss,
            v_min,
            net.buses[i_min].id,
            sol.iterations
        );
    }

    let net = CaseId::Case33.network()?;
    let inj = Injections::base_loads(&net);
    let true_v = solve_power_flow(&net, &inj)?.v;
    println!("\ncase33 end-of-feeder voltages, accurate vs reference models");
    for factor in [1.0, 1.3, 1.5] {
        let model = scale_impedances(&net, factor)?;
        let sol = solve_power_flow(&model, &inj)?;
        let worst = sol.v.iter().zip(&true_v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("  factor {factor:.1}: V[17] = {:.4}, loss {:.4} MW, worst |ΔV| {:.4}", sol.v[17], sol.loss, worst);
    }
    Ok(())
}
