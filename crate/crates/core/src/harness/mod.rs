//! Experiment configuration, runs, metrics files and summary tables.
//!
//! A metrics file is CSV: a `# config_hash: <hex>` line, a header, then one row per
//! environment step. Daily figures are sums over a day's 96 rows; end-of-run figures are
//! means over the last 50 days (or all days if fewer).

mod config;
mod metrics;
mod report;
mod run;

pub use config::{default_impedance_factor, default_lambda, ExperimentConfig, Mode};
pub use metrics::{
    daily_totals, final_window_mean, read_metrics, write_metrics, DayTotals, MetricsRow, MetricsWriter, EARLY_WINDOW,
    FINAL_WINDOW, METRICS_HEADER,
};
pub use report::{
    early_stage_report, error_vs_baseline, lambda_sweep, summarize, write_sweep_csv, DayError, ErrorReport, RunSummary,
    SweepRow,
};
pub use run::{run_experiment, run_in_lab, run_to_file, Lab};
