//! Residual-scale sweep on a short horizon, written as a CSV summary.
//!
//! cargo run --example lambda_sweep -- [days] [out_dir]

use rmvvc::harness::{lambda_sweep, write_sweep_csv, ExperimentConfig, Lab, Mode};

fn main() -> rmvvc::Result<()> {
    let mut args = std::env::args().skip(1);
    let days: usize = args.next().map_or(12, |d| d.parse().expect("days"));
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "runs/sweep".into()));

    let base = ExperimentConfig {
        mode: Mode::RmSac,
        days,
        output_dir: out.clone(),
        ..ExperimentConfig::default()
    };
    let mut lab = Lab::new(&base)?;
    let rows = lambda_sweep(&mut lab, &base, &[0.0, 0.2, 0.4, 0.8])?;
    println!("λ     critic loss   train     test      train − test");
    for r in &rows {
        println!(
            "{:.1}   {:11.3e}   {:8.4}  {:8.4}  {:8.4}",
            r.lambda, r.critic_loss, r.train_reward, r.test_reward, r.gap
        );
    }
    let path = out.join("sweep_summary.csv");
    write_sweep_csv(&path, &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}
