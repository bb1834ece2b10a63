//! Daily load and PV profiles (96 steps per day) with multiplicative noise.
//!
//! Loads follow a sinusoidal daily curve peaking at step 76 (evening); PV follows a
//! half-sine between steps 24 and 72. Every value is multiplied by an independent
//! `Uniform(1 - noise, 1 + noise)` factor per bus (or device) and step.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridflow::{Injections, Network};

pub const STEPS_PER_DAY: usize = 96;
pub const DEFAULT_NOISE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    /// Inverter-based energy resource (PV inverter).
    Iber,
    /// Static var compensator.
    Svc,
}

/// A controllable reactive-power device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub kind: DeviceKind,
    pub bus: usize,
    /// Apparent-power rating, MVA.
    pub s_mva: f64,
    /// Maximum active output, MW (iber only).
    pub p_max: f64,
    /// Reactive limits, MVar (svc only).
    pub q_min: f64,
    pub q_max: f64,
}

impl DeviceSpec {
    pub fn iber(bus: usize, s_mva: f64, p_max: f64) -> Self {
        DeviceSpec {
            kind: DeviceKind::Iber,
            bus,
            s_mva,
            p_max,
            q_min: 0.0,
            q_max: 0.0,
        }
    }

    pub fn svc(bus: usize, q_min: f64, q_max: f64) -> Self {
        DeviceSpec {
            kind: DeviceKind::Svc,
            bus,
            s_mva: q_max.abs().max(q_min.abs()),
            p_max: 0.0,
            q_min,
            q_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.s_mva, self.p_max, self.q_min, self.q_max]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidNetwork(format!("device at bus {} has non-finite ratings", self.bus)));
        }
        match self.kind {
            DeviceKind::Iber if !(self.s_mva >= self.p_max && self.p_max >= 0.0) => {
                Err(Error::InvalidNetwork(format!(
                    "iber at bus {} needs s_mva >= p_max >= 0 (s={}, p_max={})",
                    self.bus, self.s_mva, self.p_max
                )))
            }
            DeviceKind::Svc if self.q_min > self.q_max => Err(Error::InvalidNetwork(format!(
                "svc at bus {} has q_min > q_max",
                self.bus
            ))),
            _ => Ok(()),
        }
    }

    /// Reactive-power range in MVar: the headroom circle for inverters, the box for SVCs.
    pub fn q_range(&self) -> Result<(f64, f64)> {
        match self.kind {
            DeviceKind::Iber => iber_q_range(self),
            DeviceKind::Svc => Ok((self.q_min, self.q_max)),
        }
    }
}

/// `±sqrt(S² − P̄²)`: inverter reactive capability left at full active output.
pub fn iber_q_range(spec: &DeviceSpec) -> Result<(f64, f64)> {
    if spec.kind != DeviceKind::Iber {
        return Err(Error::InvalidArgument("iber_q_range called on a non-iber device".into()));
    }
    if spec.s_mva < spec.p_max {
        return Err(Error::InvalidArgument(format!(
            "s_mva ({}) is below p_max ({})",
            spec.s_mva, spec.p_max
        )));
    }
    let cap = (spec.s_mva * spec.s_mva - spec.p_max * spec.p_max).sqrt();
    Ok((-cap, cap))
}

/// Load fluctuation ratio at step `t` of the day: 0.6 at step 28, 1.0 at step 76.
pub fn load_curve(t: usize) -> f64 {
    0.8 + 0.2 * (2.0 * PI * (t as f64 - 28.0) / STEPS_PER_DAY as f64 - PI / 2.0).sin()
}

/// Normalized PV availability at step `t`: zero at night, 1.0 at noon (step 48).
pub fn pv_curve(t: usize) -> f64 {
    (PI * (t as f64 - 24.0) / 48.0).sin().max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub days: usize,
    pub steps_per_day: usize,
    pub seed: u64,
    pub n_bus: usize,
    pub n_dev: usize,
    /// `[global_step * n_bus + bus]` load multipliers.
    pub load_scale: Vec<f64>,
    /// Absolute load per bus and step, MW / MVar.
    pub load_p: Vec<f64>,
    pub load_q: Vec<f64>,
    /// `[global_step * n_dev + device]` PV active output, MW (zero for SVCs).
    pub pv_output: Vec<f64>,
}

/// Deterministic profile generation with the default 20 % noise.
pub fn generate_profiles(net: &Network, devices: &[DeviceSpec], days: usize, seed: u64) -> Result<ScenarioSet> {
    generate_profiles_with_noise(net, devices, days, seed, DEFAULT_NOISE)
}

pub fn generate_profiles_with_noise(
    net: &Network,
    devices: &[DeviceSpec],
    days: usize,
    seed: u64,
    noise: f64,
) -> Result<ScenarioSet> {
    if days == 0 {
        return Err(Error::InvalidArgument("days must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&noise) {
        return Err(Error::InvalidArgument(format!("noise amplitude {noise} must lie in [0, 1)")));
    }
    for dev in devices {
        if net.bus_index(dev.bus).is_none() {
            return Err(Error::InvalidArgument(format!("device references unknown bus {}", dev.bus)));
        }
    }
    let n_bus = net.n_bus();
    let n_dev = devices.len();
    let total = days * STEPS_PER_DAY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| 1.0 + noise * (2.0 * rng.random::<f64>() - 1.0);

    let mut load_scale = Vec::with_capacity(total * n_bus);
    let mut load_p = Vec::with_capacity(total * n_bus);
    let mut load_q = Vec::with_capacity(total * n_bus);
    let mut pv_output = Vec::with_capacity(total * n_dev);
    for g in 0..total {
        let t = g % STEPS_PER_DAY;
        let curve = load_curve(t);
        for bus in &net.buses {
            let m = curve * draw(&mut rng);
            load_scale.push(m);
            load_p.push(bus.load_p * m);
            load_q.push(bus.load_q * m);
        }
        let sun = pv_curve(t);
        for dev in devices {
            let pv = match dev.kind {
                DeviceKind::Iber => (dev.p_max * sun * draw(&mut rng)).clamp(0.0, dev.p_max),
                DeviceKind::Svc => 0.0,
            };
            pv_output.push(pv);
        }
    }
    Ok(ScenarioSet {
        days,
        steps_per_day: STEPS_PER_DAY,
        seed,
        n_bus,
        n_dev,
        load_scale,
        load_p,
        load_q,
        pv_output,
    })
}

impl ScenarioSet {
    pub fn total_steps(&self) -> usize {
        self.days * self.steps_per_day
    }

    fn global(&self, day: usize, step: usize) -> usize {
        assert!(day < self.days && step < self.steps_per_day, "step ({day}, {step}) out of range");
        day * self.steps_per_day + step
    }

    pub fn load_multipliers(&self, day: usize, step: usize) -> &[f64] {
        let g = self.global(day, step);
        &self.load_scale[g * self.n_bus..(g + 1) * self.n_bus]
    }

    pub fn pv(&self, day: usize, step: usize) -> &[f64] {
        let g = self.global(day, step);
        &self.pv_output[g * self.n_dev..(g + 1) * self.n_dev]
    }

    /// Exogenous injections for one step: negative loads plus PV at device buses.
    /// Device reactive output is not included.
    pub fn injections(&self, net: &Network, day: usize, step: usize) -> Injections {
        debug_assert!(net.n_bus() == self.n_bus && net.n_devices() == self.n_dev, "scenario built for another network");
        let g = self.global(day, step);
        let range = g * self.n_bus..(g + 1) * self.n_bus;
        let mut inj = Injections {
            p: self.load_p[range.clone()].iter().map(|x| -x).collect(),
            q: self.load_q[range].iter().map(|x| -x).collect(),
        };
        for (bus, pv) in net.device_bus_indices().into_iter().zip(self.pv(day, step)) {
            inj.p[bus] += pv;
        }
        inj
    }

    /// Writes `day,step,bus_or_device_id,kind,value_mw_or_mvar` rows.
    pub fn write_csv(&self, net: &Network, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(file, "# seed={} days={} steps_per_day={}", self.seed, self.days, self.steps_per_day)
            .map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["day", "step", "bus_or_device_id", "kind", "value_mw_or_mvar"])?;
        for day in 0..self.days {
            for step in 0..self.steps_per_day {
                let g = self.global(day, step);
                for (i, bus) in net.buses.iter().enumerate() {
                    let (p, q) = (self.load_p[g * self.n_bus + i], self.load_q[g * self.n_bus + i]);
                    for (kind, value) in [("load_p", p), ("load_q", q)] {
                        w.write_record([day.to_string(), step.to_string(), bus.id.to_string(), kind.into(), value.to_string()])?;
                    }
                }
                for (d, pv) in self.pv(day, step).iter().enumerate() {
                    w.write_record([day.to_string(), step.to_string(), d.to_string(), "pv_p".into(), pv.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a file written by [`ScenarioSet::write_csv`]. Multipliers are recovered from the
    /// network's base loads (1.0 where a bus has no base load).
    pub fn read_csv(net: &Network, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut header = String::new();
        reader.read_line(&mut header).map_err(|e| Error::io(path, e))?;
        let field = |name: &str| -> Result<u64> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(name).and_then(|v| v.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("scenario header is missing `{name}`")))
        };
        let seed = field("seed")?;
        let days = field("days")? as usize;
        let steps_per_day = field("steps_per_day")? as usize;
        let n_bus = net.n_bus();
        let n_dev = net.n_devices();
        let total = days * steps_per_day;
        let mut load_p = vec![f64::NAN; total * n_bus];
        let mut load_q = vec![f64::NAN; total * n_bus];
        let mut pv_output = vec![f64::NAN; total * n_dev];

        let mut rows = csv::Reader::from_reader(reader);
        for record in rows.records() {
            let record = record?;
            let parse = |i: usize| -> Result<&str> {
                record
                    .get(i)
                    .ok_or_else(|| Error::InvalidArgument("short scenario row".into()))
            };
            let num = |i: usize| -> Result<usize> {
                parse(i)?
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad integer in scenario row {record:?}")))
            };
            let (day, step, id) = (num(0)?, num(1)?, num(2)?);
            let value: f64 = parse(4)?
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value in scenario row {record:?}")))?;
            if day >= days || step >= steps_per_day {
                return Err(Error::InvalidArgument(format!("scenario row out of range: {record:?}")));
            }
            let g = day * steps_per_day + step;
            match parse(3)? {
                "load_p" | "load_q" => {
                    let bus = net
                        .bus_index(id)
                        .ok_or_else(|| Error::InvalidArgument(format!("unknown bus {id} in scenario")))?;
                    let target = if parse(3)? == "load_p" { &mut load_p } else { &mut load_q };
                    target[g * n_bus + bus] = value;
                }
                "pv_p" if id < n_dev => pv_output[g * n_dev + id] = value,
                other => return Err(Error::InvalidArgument(format!("unknown scenario row kind `{other}` (id {id})"))),
            }
        }
        if load_p.iter().chain(&load_q).chain(&pv_output).any(|x| x.is_nan()) {
            return Err(Error::InvalidArgument("scenario file is incomplete".into()));
        }
        let load_scale = (0..total * n_bus)
            .map(|k| {
                let bus = &net.buses[k % n_bus];
                if bus.load_p != 0.0 {
                    load_p[k] / bus.load_p
                } else if bus.load_q != 0.0 {
                    load_q[k] / bus.load_q
                } else {
                    1.0
                }
            })
            .collect();
        Ok(ScenarioSet {
            days,
            steps_per_day,
            seed,
            n_bus,
            n_dev,
            load_scale,
            load_p,
            load_q,
            pv_output,
        })
    }
}
