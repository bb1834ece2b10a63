use num_complex::Complex64;

use super::network::Network;
use crate::error::{Error, Result};

/// Mismatch tolerance in p.u. of apparent power.
pub const MISMATCH_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 200;

/// Net bus injections in MW / MVar, indexed like `Network::buses`.
/// Loads are negative; the slack entry is ignored by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Injections {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Injections {
    pub fn zeros(n: usize) -> Self {
        Injections {
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    /// Base-case loads of the network, no device output.
    pub fn base_loads(net: &Network) -> Self {
        Injections {
            p: net.buses.iter().map(|b| -b.load_p).collect(),
            q: net.buses.iter().map(|b| -b.load_q).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Voltage magnitude per bus, p.u.
    pub v: Vec<f64>,
    /// Voltage angle per bus, radians.
    pub angle: Vec<f64>,
    /// Net active injection per bus including the slack, MW.
    pub p_inj: Vec<f64>,
    /// Net reactive injection per bus including the slack, MVar.
    pub q_inj: Vec<f64>,
    /// Active power loss, MW.
    pub loss: f64,
    /// Per-branch I²r loss, MW, indexed like `Network::branches`.
    pub branch_loss: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Final max apparent-power mismatch, p.u.
    pub mismatch: f64,
}

/// Balanced backward/forward sweep. The slack is held at 1.0∠0 p.u.
pub fn solve_power_flow(net: &Network, inj: &Injections) -> Result<PowerFlowSolution> {
    let n = net.n_bus();
    if inj.p.len() != n || inj.q.len() != n {
        return Err(Error::Shape(format!(
            "injections have length {}/{}, network has {n} buses",
            inj.p.len(),
            inj.q.len()
        )));
    }
    if inj.p.iter().chain(&inj.q).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("power-flow injections".into()));
    }

    let topo = &net.topology;
    let slack = net.slack_index();
    let zb = net.z_base();
    let z: Vec<Complex64> = (0..n)
        .map(|i| match topo.feeder[i] {
            usize::MAX => Complex64::new(0.0, 0.0),
            k => Complex64::new(net.branches[k].r / zb, net.branches[k].x / zb),
        })
        .collect();
    let s: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(inj.p[i], inj.q[i]) / net.base_mva)
        .collect();

    let mut v = vec![Complex64::new(1.0, 0.0); n];
    // Current flowing from each bus's parent into it (downstream direction).
    let mut current = vec![Complex64::new(0.0, 0.0); n];
    let mut iterations = 0;
    let mut mismatch = f64::INFINITY;
    let mut first_mismatch = None;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // Backward sweep: branch current = load current drawn by the subtree.
        for &i in &topo.order {
            current[i] = if i == slack {
                Complex64::new(0.0, 0.0)
            } else {
                -(s[i] / v[i]).conj()
            };
        }
        for &i in topo.order.iter().rev() {
            let p = topo.parent[i];
            if p != usize::MAX && p != slack {
                let c = current[i];
                current[p] += c;
            }
        }
        // Forward sweep.
        let old = v.clone();
        for &i in topo.order.iter().skip(1) {
            v[i] = v[topo.parent[i]] - z[i] * current[i];
        }
        // Mismatch of the updated voltages against the injections implied by the currents.
        mismatch = 0.0;
        for i in 0..n {
            if i == slack {
                continue;
            }
            // The sweep currents carry conj(S/V_old); at V_new they deliver V_new·S/V_old.
            let s_calc = v[i] * s[i] / old[i];
            mismatch = f64::max(mismatch, (s_calc - s[i]).norm());
        }
        if !mismatch.is_finite() || v.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::VoltageCollapse {
                iteration: iterations,
                mismatch,
            });
        }
        let reference = *first_mismatch.get_or_insert(mismatch);
        if mismatch < MISMATCH_TOL {
            break;
        }
        if iterations > 5 && mismatch > 1e3 * reference.max(1e-3) {
            return Err(Error::VoltageCollapse {
                iteration: iterations,
                mismatch,
            });
        }
    }
    if mismatch >= MISMATCH_TOL {
        return Err(Error::NonConvergence { iterations, mismatch });
    }

    Ok(assemble(net, &z, &v, &current, iterations, mismatch))
}

/// Injections and losses from the final voltages and the branch currents that produced them.
/// Because every child voltage is its parent's minus z·I, the injections sum to Σ|I|²r exactly.
fn assemble(
    net: &Network,
    z: &[Complex64],
    v: &[Complex64],
    current: &[Complex64],
    iterations: usize,
    mismatch: f64,
) -> PowerFlowSolution {
    let n = net.n_bus();
    let topo = &net.topology;
    let mut net_current = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let p = topo.parent[i];
        if p != usize::MAX {
            net_current[p] += current[i];
            net_current[i] -= current[i];
        }
    }
    let mut p_inj = Vec::with_capacity(n);
    let mut q_inj = Vec::with_capacity(n);
    for i in 0..n {
        let s = v[i] * net_current[i].conj() * net.base_mva;
        p_inj.push(s.re);
        q_inj.push(s.im);
    }
    let mut branch_loss = vec![0.0; net.branches.len()];
    for i in 0..n {
        let k = topo.feeder[i];
        if k != usize::MAX {
            branch_loss[k] = current[i].norm_sqr() * z[i].re * net.base_mva;
        }
    }
    let loss = p_inj.iter().sum();
    PowerFlowSolution {
        v: v.iter().map(|x| x.norm()).collect(),
        angle: v.iter().map(|x| x.arg()).collect(),
        p_inj,
        q_inj,
        loss,
        branch_loss,
        converged: true,
        iterations,
        mismatch,
    }
}

/// Total active loss, MW: the sum of all bus injections.
pub fn total_loss(sol: &PowerFlowSolution) -> Result<f64> {
    if !sol.converged {
        return Err(Error::Contract("total_loss called on a non-converged solution".into()));
    }
    Ok(sol.p_inj.iter().sum())
}
