#![allow(dead_code)]

pub mod bandit;
pub mod newton;

use rmvvc::gridflow::{Injections, Network};

/// Random loads between 0 and 1.5× nominal plus random reactive injections at device buses.
pub fn random_injections(net: &Network, rng: &mut impl rand::Rng) -> Injections {
    let mut inj = Injections::zeros(net.n_bus());
    for (i, b) in net.buses.iter().enumerate() {
        let m: f64 = rng.random_range(0.0..1.5);
        inj.p[i] = -b.load_p * m;
        inj.q[i] = -b.load_q * m;
    }
    for (bus, d) in net.device_bus_indices().into_iter().zip(&net.devices) {
        let (lo, hi) = d.q_range().unwrap();
        inj.q[bus] += rng.random_range(lo..hi);
        if d.p_max > 0.0 {
            inj.p[bus] += rng.random_range(0.0..d.p_max);
        }
    }
    inj
}
