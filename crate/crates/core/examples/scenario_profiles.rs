//! Daily load and PV profiles and the reactive headroom they leave the inverters.
//!
//! cargo run --example scenario_profiles [-- out.csv]

use rmvvc::gridflow::CaseId;
use rmvvc::scenario::{generate_profiles, iber_q_range, load_curve, pv_curve};

fn main() -> rmvvc::Result<()> {
    let net = CaseId::Case33.network()?;
    let scenario = generate_profiles(&net, &net.devices, 3, 42)?;
    println!("step  load curve  pv curve  total load MW  pv MW");
    for step in (0..96).step_by(8) {
        let total: f64 = scenario.injections(&net, 0, step).p.iter().filter(|p| **p < 0.0).map(|p| -p).sum();
        let pv: f64 = scenario.pv(0, step).iter().sum();
        println!("{step:4}  {:10.3}  {:8.3}  {total:13.3}  {pv:5.3}", load_curve(step), pv_curve(step));
    }

    println!("\ndevice  bus  kind  reactive range MVar");
    for (i, d) in net.devices.iter().enumerate() {
        let (lo, hi) = d.q_range()?;
        let kind = if d.p_max > 0.0 { "iber" } else { "svc" };
        println!("{i:6}  {:3}  {kind:4}  [{lo:.4}, {hi:.4}]", d.bus);
        if kind == "iber" {
            let (lo2, hi2) = iber_q_range(d)?;
            assert_eq!((lo, hi), (lo2, hi2));
        }
    }

    if let Some(path) = std::env::args().nth(1) {
        scenario.write_csv(&net, &path)?;
        println!("\nwrote {path}");
    }
    Ok(())
}
