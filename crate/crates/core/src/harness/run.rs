use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;

use super::config::{ExperimentConfig, Mode};
use super::metrics::{MetricsRow, MetricsWriter};
use crate::actionspace::{ActionBox, ResidualConfig};
use crate::agent::{train_day_loop, ResidualSpec, SacAgent};
use crate::env::{State, VoltageLimits, VvcEnv};
use crate::error::{Error, Result};
use crate::gridflow::{scale_impedances, CaseId, Network};
use crate::refopt::{CacheKey, DispatchCache, DispatchProblem};
use crate::scenario::{generate_profiles_with_noise, ScenarioSet};

/// Network, scenario and solved dispatches shared by every run on one feeder and seed.
#[derive(Clone)]
pub struct Lab {
    case: CaseId,
    net: Arc<Network>,
    scenario: Arc<ScenarioSet>,
    limits: VoltageLimits,
    c_v: f64,
    cache: DispatchCache,
    /// Per-step dispatch tables keyed by impedance-factor bits.
    tables: HashMap<u64, Arc<Vec<Vec<f64>>>>,
}

impl Lab {
    /// Builds the lab for `cfg`'s feeder, seed, day count, noise and reward settings.
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let net = cfg.network.network()?;
        let scenario = generate_profiles_with_noise(&net, &net.devices, cfg.days, cfg.seed, cfg.noise)?;
        Lab::from_parts(cfg.network, net, scenario, cfg.limits()?, cfg.c_v)
    }

    /// A lab over a custom network and scenario; `case` labels cache entries and must match
    /// the configs run in it.
    pub fn from_parts(
        case: CaseId,
        net: Network,
        scenario: ScenarioSet,
        limits: VoltageLimits,
        c_v: f64,
    ) -> Result<Self> {
        if scenario.n_bus != net.n_bus() || scenario.n_dev != net.n_devices() {
            return Err(Error::Shape("scenario shape does not match the network".into()));
        }
        Ok(Lab {
            case,
            net: Arc::new(net),
            scenario: Arc::new(scenario),
            limits,
            c_v,
            cache: DispatchCache::new(),
            tables: HashMap::new(),
        })
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn scenario(&self) -> &Arc<ScenarioSet> {
        &self.scenario
    }

    pub fn cache(&self) -> &DispatchCache {
        &self.cache
    }

    pub fn load_cache(&mut self, path: &Path) -> Result<()> {
        if path.exists() {
            let loaded = DispatchCache::load(path)?;
            info!("loaded {} cached dispatches from {}", loaded.len(), path.display());
            self.cache = loaded;
        }
        Ok(())
    }

    /// Whether `cfg` can run in this lab without rebuilding the scenario.
    pub fn matches(&self, cfg: &ExperimentConfig) -> bool {
        self.case == cfg.network
            && self.scenario.seed == cfg.seed
            && self.scenario.days >= cfg.days
            && Ok(self.limits) == cfg.limits().map_err(|_| ())
            && self.c_v == cfg.c_v
    }

    pub fn env(&self) -> Result<VvcEnv> {
        VvcEnv::new(self.net.clone(), self.scenario.clone(), self.limits, self.c_v)
    }

    /// Model-optimal setpoints for every scenario step on the network with impedances
    /// scaled by `factor` (1.0 is the accurate model).
    pub fn dispatch_table(&mut self, factor: f64) -> Result<Arc<Vec<Vec<f64>>>> {
        if let Some(t) = self.tables.get(&factor.to_bits()) {
            return Ok(t.clone());
        }
        let model = scale_impedances(&self.net, factor)?;
        let bx = ActionBox::from_devices(&self.net.devices)?;
        let steps = self.scenario.steps_per_day;
        let mut table = Vec::with_capacity(self.scenario.total_steps());
        for day in 0..self.scenario.days {
            for step in 0..steps {
                let key = CacheKey::new(self.case.name(), factor, self.scenario.seed, day, step);
                let prob = DispatchProblem {
                    model: &model,
                    action_box: bx.clone(),
                    exogenous: self.scenario.injections(&self.net, day, step),
                    limits: self.limits,
                    c_v: self.c_v,
                    seed: dispatch_seed(self.scenario.seed, day * steps + step),
                };
                let sol = self.cache.get_or_solve(key, &prob)?;
                if !sol.converged {
                    log::warn!("dispatch at day {day} step {step} (factor {factor}) did not converge");
                }
                table.push(sol.action);
            }
        }
        let table = Arc::new(table);
        self.tables.insert(factor.to_bits(), table.clone());
        Ok(table)
    }
}

fn dispatch_seed(seed: u64, global_step: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ global_step as u64
}

fn agent_seed(seed: u64) -> u64 {
    seed ^ 0x5ac0_5ac0
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Executes a fixed dispatch table on the accurate environment.
fn run_dispatch(lab: &Lab, table: &[Vec<f64>], days: usize) -> Result<Vec<MetricsRow>> {
    let env = lab.env()?;
    let steps = lab.scenario.steps_per_day;
    let mut rows = Vec::with_capacity(days * steps);
    for day in 0..days {
        for step in 0..steps {
            let a = &table[day * steps + step];
            let (r, _) = env.evaluate(day, step, a)?;
            rows.push(MetricsRow {
                day,
                step,
                train_reward: r.r,
                test_reward: r.r,
                test_ploss: r.loss(),
                test_violation: r.violation(),
                critic_loss: f64::NAN,
                alpha: f64::NAN,
                reference_action_norm: norm(a),
            });
        }
    }
    Ok(rows)
}

/// Runs `cfg` inside `lab`, handing each finished day to `on_day`.
pub fn run_in_lab(
    lab: &mut Lab,
    cfg: &ExperimentConfig,
    mut on_day: impl FnMut(&[MetricsRow]) -> Result<()>,
) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    if !lab.matches(cfg) {
        return Err(Error::Config("experiment does not match the lab's feeder, seed or scenario".into()));
    }
    let steps = lab.scenario.steps_per_day;
    let emit = |rows: Vec<MetricsRow>, on_day: &mut dyn FnMut(&[MetricsRow]) -> Result<()>| -> Result<Vec<MetricsRow>> {
        for day in rows.chunks(steps) {
            on_day(day)?;
        }
        Ok(rows)
    };
    let spec = match cfg.mode {
        Mode::MboAccurate => {
            let table = lab.dispatch_table(1.0)?;
            return emit(run_dispatch(lab, &table, cfg.days)?, &mut on_day);
        }
        Mode::MboReference => {
            let table = lab.dispatch_table(cfg.impedance())?;
            return emit(run_dispatch(lab, &table, cfg.days)?, &mut on_day);
        }
        Mode::RmSac if cfg.lambda() == 0.0 => {
            // An empty residual interval leaves nothing to learn: execute the reference.
            let table = lab.dispatch_table(cfg.impedance())?;
            return emit(run_dispatch(lab, &table, cfg.days)?, &mut on_day);
        }
        Mode::Sac => ResidualSpec::Plain,
        Mode::RmSacWide => ResidualSpec::Wide,
        Mode::RmSac => ResidualSpec::Scaled(ResidualConfig::from_lambda(
            cfg.lambda(),
            &ActionBox::from_devices(&lab.net.devices)?,
        )?),
    };
    let reference = if spec.uses_reference() {
        Some(lab.dispatch_table(cfg.impedance())?)
    } else {
        None
    };
    let mut env = lab.env()?;
    let state_dim = State::feature_dim(lab.net.n_bus(), lab.net.n_devices());
    let mut agent = SacAgent::new(state_dim, lab.net.n_devices(), cfg.sac.clone(), agent_seed(cfg.seed))?;
    info!("{}: training for {} days", cfg.run_name(), cfg.days);
    train_day_loop(&mut env, &mut agent, &spec, reference.as_deref().map(Vec::as_slice), cfg.days, on_day)
}

/// Runs one experiment and writes its metrics CSV. Rows are flushed day by day, so a
/// failed run leaves the completed days on disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let mut lab = Lab::new(cfg)?;
    if let Some(p) = &cfg.dispatch_cache {
        lab.load_cache(p)?;
    }
    let path = run_to_file(&mut lab, cfg)?;
    if let Some(p) = &cfg.dispatch_cache {
        lab.cache().save(p)?;
    }
    Ok(path)
}

/// [`run_in_lab`] with the rows streamed to `cfg.metrics_path()`.
pub fn run_to_file(lab: &mut Lab, cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let path = cfg.metrics_path();
    let mut writer = MetricsWriter::create(&path, &cfg.config_hash())?;
    run_in_lab(lab, cfg, |rows| writer.write_rows(rows))?;
    Ok(path)
}
