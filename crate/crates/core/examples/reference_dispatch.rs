//! Reference versus accurate dispatch on a handful of case33 steps.
//!
//! cargo run --example reference_dispatch

use std::time::Instant;

use rmvvc::actionspace::ActionBox;
use rmvvc::env::{evaluate_action, VoltageLimits, DEFAULT_VIOLATION_PENALTY};
use rmvvc::gridflow::{scale_impedances, CaseId};
use rmvvc::refopt::{residual_norm_check, solve_dispatch, DispatchProblem};
use rmvvc::scenario::generate_profiles;

fn main() -> rmvvc::Result<()> {
    let net = CaseId::Case33.network()?;
    let reference = scale_impedances(&net, 1.5)?;
    let scenario = generate_profiles(&net, &net.devices, 1, 7)?;
    let bx = ActionBox::from_devices(&net.devices)?;
    let limits = VoltageLimits::default();

    println!("step  a*                               a_m                              r(a*)     r(a_m)   holds");
    let started = Instant::now();
    for step in (0..96).step_by(8) {
        let exogenous = scenario.injections(&net, 0, step);
        let problem = |model| DispatchProblem {
            model,
            action_box: bx.clone(),
            exogenous: exogenous.clone(),
            limits,
            c_v: DEFAULT_VIOLATION_PENALTY,
            seed: step as u64,
        };
        let best = solve_dispatch(&problem(&net))?;
        let a_m = solve_dispatch(&problem(&reference))?;
        let (r_m, _) = evaluate_action(&net, &exogenous, &a_m.action, &limits, DEFAULT_VIOLATION_PENALTY)?;
        let check = residual_norm_check(&a_m.action, &best.action)?;
        let fmt = |a: &[f64]| a.iter().map(|x| format!("{x:7.4}")).collect::<Vec<_>>().join(" ");
        println!(
            "{step:4}  {}  {}  {:8.5}  {:8.5}  {}",
            fmt(&best.action),
            fmt(&a_m.action),
            best.objective,
            r_m.r,
            check.holds
        );
    }
    println!("24 solves in {:.2?}", started.elapsed());
    Ok(())
}
