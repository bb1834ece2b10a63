use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::agent::StepLog;
use crate::error::{Error, Result};

/// One metrics-file row per environment step.
pub type MetricsRow = StepLog;

pub const METRICS_HEADER: &str =
    "day,step,train_reward,test_reward,test_ploss,test_violation,critic_loss,alpha,reference_action_norm";

/// Days averaged for the end-of-run statistics.
pub const FINAL_WINDOW: usize = 50;
/// Days `0..EARLY_WINDOW` form the early-stage window.
pub const EARLY_WINDOW: usize = 10;

/// Streams rows to a metrics CSV whose first line carries the config hash.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path, config_hash: &str) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = MetricsWriter {
            out: BufWriter::new(f),
            path: path.to_path_buf(),
        };
        w.line(&format!("# config_hash: {config_hash}"))?;
        w.line(METRICS_HEADER)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn write_rows(&mut self, rows: &[MetricsRow]) -> Result<()> {
        for r in rows {
            self.line(&format!(
                "{},{},{},{},{},{},{},{},{}",
                r.day,
                r.step,
                r.train_reward,
                r.test_reward,
                r.test_ploss,
                r.test_violation,
                r.critic_loss,
                r.alpha,
                r.reference_action_norm
            ))?;
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_metrics(path: &Path, config_hash: &str, rows: &[MetricsRow]) -> Result<()> {
    MetricsWriter::create(path, config_hash)?.write_rows(rows)
}

/// Returns the embedded config hash and the rows.
pub fn read_metrics(path: &Path) -> Result<(String, Vec<MetricsRow>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |n: usize, what: &str| Error::InvalidArgument(format!("{}:{n}: {what}", path.display()));
    let mut lines = BufReader::new(f).lines();
    let mut next = |n: usize| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad(n, "unexpected end of file"))?
            .map_err(|e| Error::io(path, e))
    };
    let first = next(1)?;
    let second = next(2)?;
    let hash = first
        .strip_prefix("# config_hash: ")
        .ok_or_else(|| bad(1, "missing config hash"))?
        .trim()
        .to_string();
    if second.trim() != METRICS_HEADER {
        return Err(bad(2, "unexpected header"));
    }
    let mut rows = Vec::new();
    for n in 3.. {
        let Some(line) = lines.next() else { break };
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Vec<&str> = line.split(',').map(str::trim).collect();
        if rec.len() != 9 {
            return Err(bad(n, "expected 9 columns"));
        }
        let f = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(n, "bad number"));
        let u = |k: usize| rec[k].parse::<usize>().map_err(|_| bad(n, "bad integer"));
        rows.push(MetricsRow {
            day: u(0)?,
            step: u(1)?,
            train_reward: f(2)?,
            test_reward: f(3)?,
            test_ploss: f(4)?,
            test_violation: f(5)?,
            critic_loss: f(6)?,
            alpha: f(7)?,
            reference_action_norm: f(8)?,
        });
    }
    Ok((hash, rows))
}

/// Sums over one day's rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayTotals {
    pub day: usize,
    pub train_reward: f64,
    pub test_reward: f64,
    pub test_ploss: f64,
    pub test_violation: f64,
    /// Mean of the defined per-step critic losses; NaN if none.
    pub critic_loss: f64,
}

impl DayTotals {
    pub fn gap(&self) -> f64 {
        self.train_reward - self.test_reward
    }
}

/// Groups rows by day in order of appearance.
pub fn daily_totals(rows: &[MetricsRow]) -> Vec<DayTotals> {
    let mut out: Vec<DayTotals> = Vec::new();
    let mut losses: Vec<(f64, usize)> = Vec::new();
    for r in rows {
        if out.last().is_none_or(|d| d.day != r.day) {
            out.push(DayTotals {
                day: r.day,
                train_reward: 0.0,
                test_reward: 0.0,
                test_ploss: 0.0,
                test_violation: 0.0,
                critic_loss: f64::NAN,
            });
            losses.push((0.0, 0));
        }
        let d = out.last_mut().unwrap();
        d.train_reward += r.train_reward;
        d.test_reward += r.test_reward;
        d.test_ploss += r.test_ploss;
        d.test_violation += r.test_violation;
        if r.critic_loss.is_finite() {
            let l = losses.last_mut().unwrap();
            l.0 += r.critic_loss;
            l.1 += 1;
        }
    }
    for (d, (sum, n)) in out.iter_mut().zip(losses) {
        if n > 0 {
            d.critic_loss = sum / n as f64;
        }
    }
    out
}

/// Mean of `f` over the last `min(FINAL_WINDOW, days)` days, skipping NaN values.
pub fn final_window_mean(days: &[DayTotals], f: impl Fn(&DayTotals) -> f64) -> f64 {
    let start = days.len().saturating_sub(FINAL_WINDOW);
    nan_mean(days[start..].iter().map(f))
}

pub(crate) fn nan_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.filter(|v| !v.is_nan()).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}
