use std::fs;
use std::path::Path;

use super::config::{ExperimentConfig, Mode};
use super::metrics::{daily_totals, final_window_mean, nan_mean, DayTotals, MetricsRow, EARLY_WINDOW};
use super::run::{run_to_file, Lab};
use crate::error::{Error, Result};

/// Final-window means for one λ, the quantities plotted against λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub critic_loss: f64,
    pub train_reward: f64,
    pub test_reward: f64,
    /// Train minus test daily reward.
    pub gap: f64,
}

impl SweepRow {
    pub fn from_rows(lambda: f64, rows: &[MetricsRow]) -> Self {
        let days = daily_totals(rows);
        SweepRow {
            lambda,
            critic_loss: final_window_mean(&days, |d| d.critic_loss),
            train_reward: final_window_mean(&days, |d| d.train_reward),
            test_reward: final_window_mean(&days, |d| d.test_reward),
            gap: final_window_mean(&days, DayTotals::gap),
        }
    }
}

/// Runs `rm_sac` once per λ in `lab` and summarises each run.
pub fn lambda_sweep(lab: &mut Lab, base: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::InvalidArgument(format!("λ = {l} outside [0, 1]")));
    }
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = ExperimentConfig {
            mode: Mode::RmSac,
            lambda_scale: Some(lambda),
            ..base.clone()
        };
        let path = run_to_file(lab, &cfg)?;
        let (_, rows) = super::metrics::read_metrics(&path)?;
        out.push(SweepRow::from_rows(lambda, &rows));
    }
    Ok(out)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut s = String::from("lambda,critic_loss,train_reward,test_reward,train_minus_test\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.lambda, r.critic_loss, r.train_reward, r.test_reward, r.gap));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Per-day `baseline − method` on the daily test sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayError {
    pub day: usize,
    pub reward: f64,
    pub loss: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub per_day: Vec<DayError>,
    pub final_reward: f64,
    pub final_loss: f64,
    pub final_violation: f64,
}

pub fn error_vs_baseline(method: &[MetricsRow], baseline: &[MetricsRow]) -> Result<ErrorReport> {
    if method.len() != baseline.len()
        || method.iter().zip(baseline).any(|(m, b)| m.day != b.day || m.step != b.step)
    {
        return Err(Error::InvalidArgument("method and baseline metrics cover different steps".into()));
    }
    let m = daily_totals(method);
    let b = daily_totals(baseline);
    let per_day: Vec<DayError> = m
        .iter()
        .zip(&b)
        .map(|(m, b)| DayError {
            day: m.day,
            reward: b.test_reward - m.test_reward,
            loss: b.test_ploss - m.test_ploss,
            violation: b.test_violation - m.test_violation,
        })
        .collect();
    let start = per_day.len().saturating_sub(super::metrics::FINAL_WINDOW);
    let tail = &per_day[start..];
    Ok(ErrorReport {
        final_reward: nan_mean(tail.iter().map(|d| d.reward)),
        final_loss: nan_mean(tail.iter().map(|d| d.loss)),
        final_violation: nan_mean(tail.iter().map(|d| d.violation)),
        per_day,
    })
}

/// Mean daily test reward over the first days of each run, one row per λ.
pub fn early_stage_report(runs: &[(f64, Vec<MetricsRow>)]) -> Result<Vec<(f64, f64)>> {
    runs.iter()
        .map(|(lambda, rows)| {
            let days = daily_totals(rows);
            if days.len() < EARLY_WINDOW {
                return Err(Error::InvalidArgument(format!(
                    "early-stage window needs {EARLY_WINDOW} days, λ = {lambda} has {}",
                    days.len()
                )));
            }
            Ok((*lambda, nan_mean(days[..EARLY_WINDOW].iter().map(|d| d.test_reward))))
        })
        .collect()
}

/// Final-window summary of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub test_reward: f64,
    pub test_ploss: f64,
    pub test_violation: f64,
    pub train_reward: f64,
    pub critic_loss: f64,
}

pub fn summarize(rows: &[MetricsRow]) -> RunSummary {
    let days = daily_totals(rows);
    RunSummary {
        test_reward: final_window_mean(&days, |d| d.test_reward),
        test_ploss: final_window_mean(&days, |d| d.test_ploss),
        test_violation: final_window_mean(&days, |d| d.test_violation),
        train_reward: final_window_mean(&days, |d| d.train_reward),
        critic_loss: final_window_mean(&days, |d| d.critic_loss),
    }
}
