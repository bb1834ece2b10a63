use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{DeviceKind, DeviceSpec};

/// A load bus. Loads are net of any uncontrolled generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub load_p: f64,
    pub load_q: f64,
}

/// A series branch. Impedances are in ohms; shunt susceptance is not modelled.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
}

/// Parent pointers and a root-first ordering of bus indices, derived once at load time.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Topology {
    /// Root-first (breadth-first) order of bus indices.
    pub order: Vec<usize>,
    /// Parent bus index for each bus; `usize::MAX` for the slack.
    pub parent: Vec<usize>,
    /// Index into `branches` of the branch feeding each bus; `usize::MAX` for the slack.
    pub feeder: Vec<usize>,
}

/// A validated radial distribution network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub devices: Vec<DeviceSpec>,
    pub slack_bus: usize,
    pub base_mva: f64,
    pub base_kv: f64,
    index: HashMap<usize, usize>,
    pub(crate) topology: Topology,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusRecord {
    id: usize,
    load_p_mw: f64,
    load_q_mvar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchRecord {
    from: usize,
    to: usize,
    r_ohm: f64,
    x_ohm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceRecord {
    kind: DeviceKind,
    bus: usize,
    s_mva: f64,
    p_max_mw: f64,
    q_min_mvar: f64,
    q_max_mvar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    base_mva: f64,
    base_kv: f64,
    slack_bus: usize,
    buses: Vec<BusRecord>,
    branches: Vec<BranchRecord>,
    devices: Vec<DeviceRecord>,
}

/// Reads and validates a network file (JSON schema documented in the README).
pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Network::from_json(&text)
}

impl Network {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        let buses = file
            .buses
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                load_p: b.load_p_mw,
                load_q: b.load_q_mvar,
            })
            .collect();
        let branches = file
            .branches
            .into_iter()
            .map(|b| Branch {
                from_bus: b.from,
                to_bus: b.to,
                r: b.r_ohm,
                x: b.x_ohm,
            })
            .collect();
        let devices = file
            .devices
            .into_iter()
            .map(|d| DeviceSpec {
                kind: d.kind,
                bus: d.bus,
                s_mva: d.s_mva,
                p_max: d.p_max_mw,
                q_min: d.q_min_mvar,
                q_max: d.q_max_mvar,
            })
            .collect();
        Network::new(buses, branches, devices, file.slack_bus, file.base_mva, file.base_kv)
    }

    pub fn to_json(&self) -> String {
        let file = NetworkFile {
            base_mva: self.base_mva,
            base_kv: self.base_kv,
            slack_bus: self.slack_bus,
            buses: self
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id,
                    load_p_mw: b.load_p,
                    load_q_mvar: b.load_q,
                })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|b| BranchRecord {
                    from: b.from_bus,
                    to: b.to_bus,
                    r_ohm: b.r,
                    x_ohm: b.x,
                })
                .collect(),
            devices: self
                .devices
                .iter()
                .map(|d| DeviceRecord {
                    kind: d.kind,
                    bus: d.bus,
                    s_mva: d.s_mva,
                    p_max_mw: d.p_max,
                    q_min_mvar: d.q_min,
                    q_max_mvar: d.q_max,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("network serialization cannot fail")
    }

    /// Builds a network and checks every structural invariant: unique bus ids, a single
    /// slack bus, non-negative impedances, valid device placements and a connected tree.
    pub fn new(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        devices: Vec<DeviceSpec>,
        slack_bus: usize,
        base_mva: f64,
        base_kv: f64,
    ) -> Result<Self> {
        if !(base_mva > 0.0 && base_mva.is_finite()) || !(base_kv > 0.0 && base_kv.is_finite()) {
            return Err(Error::InvalidNetwork(format!(
                "bases must be positive (base_mva={base_mva}, base_kv={base_kv})"
            )));
        }
        if buses.is_empty() {
            return Err(Error::InvalidNetwork("network has no buses".into()));
        }
        let mut index = HashMap::with_capacity(buses.len());
        for (i, bus) in buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate bus id {}", bus.id)));
            }
            if !bus.load_p.is_finite() || !bus.load_q.is_finite() {
                return Err(Error::InvalidNetwork(format!("bus {} has a non-finite load", bus.id)));
            }
        }
        let Some(&slack) = index.get(&slack_bus) else {
            return Err(Error::InvalidNetwork(format!("slack bus {slack_bus} does not exist")));
        };

        for br in &branches {
            if br.from_bus == br.to_bus {
                return Err(Error::InvalidNetwork(format!("branch {} -> {} is a self-loop", br.from_bus, br.to_bus)));
            }
            for end in [br.from_bus, br.to_bus] {
                if !index.contains_key(&end) {
                    return Err(Error::InvalidNetwork(format!("branch references unknown bus {end}")));
                }
            }
            if !(br.r >= 0.0 && br.x >= 0.0 && br.r.is_finite() && br.x.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "branch {} -> {} has invalid impedance r={} x={}",
                    br.from_bus, br.to_bus, br.r, br.x
                )));
            }
        }
        if branches.len() + 1 != buses.len() {
            return Err(Error::NonRadial(format!(
                "{} buses need exactly {} branches, found {}",
                buses.len(),
                buses.len() - 1,
                branches.len()
            )));
        }

        let n = buses.len();
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, br) in branches.iter().enumerate() {
            let (a, b) = (index[&br.from_bus], index[&br.to_bus]);
            adjacency[a].push((b, k));
            adjacency[b].push((a, k));
        }
        let mut parent = vec![usize::MAX; n];
        let mut feeder = vec![usize::MAX; n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        visited[slack] = true;
        order.push(slack);
        let mut head = 0;
        while head < order.len() {
            let bus = order[head];
            head += 1;
            for &(next, k) in &adjacency[bus] {
                if k == feeder[bus] {
                    continue;
                }
                if visited[next] {
                    return Err(Error::NonRadial(format!(
                        "branch {} -> {} closes a loop",
                        branches[k].from_bus, branches[k].to_bus
                    )));
                }
                visited[next] = true;
                parent[next] = bus;
                feeder[next] = k;
                order.push(next);
            }
        }
        if order.len() != n {
            return Err(Error::NonRadial(format!(
                "{} buses are not connected to the slack bus",
                n - order.len()
            )));
        }

        for dev in &devices {
            if !index.contains_key(&dev.bus) {
                return Err(Error::InvalidNetwork(format!("device references unknown bus {}", dev.bus)));
            }
            if dev.bus == slack_bus {
                return Err(Error::InvalidNetwork("devices cannot sit on the slack bus".into()));
            }
            dev.validate()?;
        }

        Ok(Network {
            buses,
            branches,
            devices,
            slack_bus,
            base_mva,
            base_kv,
            index,
            topology: Topology { order, parent, feeder },
        })
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_devices(&self) -> usize {
        self.devices.len()
    }

    /// Position of a bus id in `buses`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn slack_index(&self) -> usize {
        self.index[&self.slack_bus]
    }

    /// Impedance base in ohms.
    pub fn z_base(&self) -> f64 {
        self.base_kv * self.base_kv / self.base_mva
    }

    /// Bus indices of every device, in device order.
    pub fn device_bus_indices(&self) -> Vec<usize> {
        self.devices.iter().map(|d| self.index[&d.bus]).collect()
    }

    /// Same network with a different device set (placements are re-validated).
    pub fn with_devices(&self, devices: Vec<DeviceSpec>) -> Result<Self> {
        Network::new(
            self.buses.clone(),
            self.branches.clone(),
            devices,
            self.slack_bus,
            self.base_mva,
            self.base_kv,
        )
    }
}

/// Copy of `net` with every branch resistance and reactance multiplied by `factor`.
pub fn scale_impedances(net: &Network, factor: f64) -> Result<Network> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "impedance factor must be positive, got {factor}"
        )));
    }
    let mut scaled = net.clone();
    for br in &mut scaled.branches {
        br.r *= factor;
        br.x *= factor;
    }
    Ok(scaled)
}
