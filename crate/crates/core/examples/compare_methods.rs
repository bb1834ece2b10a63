//! All five methods on one scenario, with errors against the accurate-model dispatch.
//!
//! cargo run --example compare_methods -- [days]

use rmvvc::harness::{error_vs_baseline, run_in_lab, summarize, ExperimentConfig, Lab, Mode};

fn main() -> rmvvc::Result<()> {
    let days: usize = std::env::args().nth(1).map_or(12, |d| d.parse().expect("days"));
    let base = ExperimentConfig {
        days,
        ..ExperimentConfig::default()
    };
    let mut lab = Lab::new(&base)?;
    let mut runs = Vec::new();
    for mode in Mode::ALL {
        let cfg = ExperimentConfig {
            mode,
            lambda_scale: (mode == Mode::RmSac).then_some(0.3),
            ..base.clone()
        };
        runs.push((mode, run_in_lab(&mut lab, &cfg, |_| Ok(()))?));
    }
    let baseline = runs[0].1.clone();
    println!("method          test reward  loss MW   violation  reward error");
    for (mode, rows) in &runs {
        let s = summarize(rows);
        let e = error_vs_baseline(rows, &baseline)?;
        println!(
            "{:14}  {:11.4}  {:8.4}  {:9.4}  {:12.4}",
            mode.name(),
            s.test_reward,
            s.test_ploss,
            s.test_violation,
            e.final_reward
        );
    }
    Ok(())
}
