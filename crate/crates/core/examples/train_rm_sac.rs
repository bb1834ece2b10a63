//! Trains the residual agent on the 33-bus feeder and prints daily test rewards next to
//! the reference dispatch it corrects.
//!
//! cargo run --example train_rm_sac -- [days] [lambda]

use rmvvc::harness::{daily_totals, run_in_lab, ExperimentConfig, Lab, Mode};

fn main() -> rmvvc::Result<()> {
    let mut args = std::env::args().skip(1);
    let days: usize = args.next().map_or(15, |d| d.parse().expect("days"));
    let lambda: f64 = args.next().map_or(0.3, |l| l.parse().expect("lambda"));

    let cfg = ExperimentConfig {
        mode: Mode::RmSac,
        lambda_scale: Some(lambda),
        days,
        ..ExperimentConfig::default()
    };
    let mut lab = Lab::new(&cfg)?;
    let reference = run_in_lab(&mut lab, &ExperimentConfig { mode: Mode::MboReference, lambda_scale: None, ..cfg.clone() }, |_| Ok(()))?;
    let reference = daily_totals(&reference);

    println!("day   train     test    reference");
    run_in_lab(&mut lab, &cfg, |rows| {
        let d = daily_totals(rows)[0];
        println!(
            "{:3}  {:8.4}  {:8.4}  {:8.4}",
            d.day, d.train_reward, d.test_reward, reference[d.day].test_reward
        );
        Ok(())
    })?;
    Ok(())
}
