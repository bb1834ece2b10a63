use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use rmvvc::gridflow::CaseId;
use rmvvc::harness::{
    error_vs_baseline, lambda_sweep, read_metrics, run_to_file, summarize, write_sweep_csv, ExperimentConfig, Lab,
    Mode,
};

#[derive(Parser)]
#[command(name = "vvc", about = "Volt-Var control experiments on radial feeders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment per seed and write its metrics CSV.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Comma-separated seeds; overrides --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Run rm_sac for each λ and write sweep_summary.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
        lambdas: Vec<f64>,
    },
    /// Run all five methods on one scenario and write comparison.csv.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Summarise existing metrics files.
    Report {
        files: Vec<PathBuf>,
        /// Metrics of the accurate-model dispatch for error columns.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    network: Option<CaseId>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    impedance_factor: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV cache of reference and optimal dispatches, read and updated.
    #[arg(long)]
    cache_refactions: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(n) = self.network {
            cfg.network = n;
        }
        if let Some(d) = self.days {
            cfg.days = d;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.impedance_factor.is_some() {
            cfg.impedance_factor = self.impedance_factor;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if self.cache_refactions.is_some() {
            cfg.dispatch_cache = self.cache_refactions.clone();
        }
        Ok(cfg)
    }
}

fn open_lab(cfg: &ExperimentConfig) -> anyhow::Result<Lab> {
    let mut lab = Lab::new(cfg)?;
    if let Some(p) = &cfg.dispatch_cache {
        lab.load_cache(p)?;
    }
    Ok(lab)
}

fn close_lab(lab: &Lab, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    if let Some(p) = &cfg.dispatch_cache {
        lab.cache().save(p)?;
    }
    Ok(())
}

fn fmt_row(name: &str, rows: &[rmvvc::harness::MetricsRow]) -> String {
    let s = summarize(rows);
    format!(
        "{name},{},{},{},{},{}",
        s.test_reward, s.test_ploss, s.test_violation, s.train_reward, s.critic_loss
    )
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            common,
            mode,
            lambda,
            seeds,
        } => {
            let mut base = common.config()?;
            if let Some(m) = mode {
                base.mode = m;
            }
            if lambda.is_some() {
                base.lambda_scale = lambda;
            }
            let seeds = if seeds.is_empty() { vec![base.seed] } else { seeds };
            for seed in seeds {
                let cfg = ExperimentConfig { seed, ..base.clone() };
                let mut lab = open_lab(&cfg)?;
                let path = run_to_file(&mut lab, &cfg)?;
                close_lab(&lab, &cfg)?;
                println!("{}", path.display());
            }
        }
        Command::Sweep { common, lambdas } => {
            let cfg = ExperimentConfig {
                mode: Mode::RmSac,
                ..common.config()?
            };
            let mut lab = open_lab(&cfg)?;
            let rows = lambda_sweep(&mut lab, &cfg, &lambdas)?;
            close_lab(&lab, &cfg)?;
            let path = cfg.output_dir.join("sweep_summary.csv");
            write_sweep_csv(&path, &rows)?;
            println!("{}", path.display());
        }
        Command::Compare { common, lambda } => {
            let base = common.config()?;
            let mut lab = open_lab(&base)?;
            let mut runs = Vec::new();
            for mode in Mode::ALL {
                let cfg = ExperimentConfig {
                    mode,
                    lambda_scale: if mode == Mode::RmSac { lambda.or(base.lambda_scale) } else { None },
                    ..base.clone()
                };
                let path = run_to_file(&mut lab, &cfg)?;
                runs.push((mode, read_metrics(&path)?.1));
            }
            close_lab(&lab, &base)?;
            let baseline = &runs[0].1;
            let mut out = String::from(
                "method,test_reward,test_ploss,test_violation,train_reward,critic_loss,reward_error,loss_error,violation_error\n",
            );
            for (mode, rows) in &runs {
                let e = error_vs_baseline(rows, baseline)?;
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_row(mode.name(), rows),
                    e.final_reward,
                    e.final_loss,
                    e.final_violation
                ));
            }
            let path = base.output_dir.join("comparison.csv");
            std::fs::write(&path, &out)?;
            print!("{out}");
        }
        Command::Report { files, baseline } => {
            if files.is_empty() {
                bail!("no metrics files given");
            }
            let base_rows = baseline.as_deref().map(read_metrics).transpose()?.map(|(_, r)| r);
            let mut header =
                String::from("file,config_hash,test_reward,test_ploss,test_violation,train_reward,critic_loss");
            if base_rows.is_some() {
                header.push_str(",reward_error,loss_error,violation_error");
            }
            println!("{header}");
            for f in files {
                let (hash, rows) = read_metrics(&f)?;
                let s = summarize(&rows);
                let mut line = format!(
                    "{},{hash},{},{},{},{},{}",
                    f.display(),
                    s.test_reward,
                    s.test_ploss,
                    s.test_violation,
                    s.train_reward,
                    s.critic_loss
                );
                if let Some(b) = &base_rows {
                    // A longer baseline run is compared over the method's days.
                    let b = if b.len() > rows.len() { &b[..rows.len()] } else { &b[..] };
                    let e = error_vs_baseline(&rows, b)?;
                    line.push_str(&format!(",{},{},{}", e.final_reward, e.final_loss, e.final_violation));
                }
                println!("{line}");
            }
        }
    }
    Ok(())
}
