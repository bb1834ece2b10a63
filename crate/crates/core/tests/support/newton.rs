//! Polar Newton–Raphson power flow on the full bus admittance matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use rmvvc::gridflow::{Injections, Network};

pub struct NewtonSolution {
    pub v: Vec<f64>,
    pub angle: Vec<f64>,
    /// Σ of all computed bus injections, MW.
    pub loss: f64,
    pub iterations: usize,
}

fn ybus(net: &Network) -> DMatrix<Complex64> {
    let n = net.n_bus();
    let zb = net.z_base();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in &net.branches {
        let f = net.bus_index(br.from_bus).unwrap();
        let t = net.bus_index(br.to_bus).unwrap();
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r / zb, br.x / zb);
        y[(f, f)] += ys;
        y[(t, t)] += ys;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    y
}

fn injections(y: &DMatrix<Complex64>, v: &DVector<Complex64>) -> DVector<Complex64> {
    let i = y * v;
    v.component_mul(&i.map(|c| c.conj()))
}

pub fn solve(net: &Network, inj: &Injections, tol: f64) -> Option<NewtonSolution> {
    let n = net.n_bus();
    let slack = net.slack_index();
    let y = ybus(net);
    let spec: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(inj.p[i], inj.q[i]) / net.base_mva)
        .collect();
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    for it in 0..50 {
        let v = DVector::from_iterator(n, (0..n).map(|i| Complex64::from_polar(vm[i], va[i])));
        let s = injections(&y, &v);
        let mut f = DVector::zeros(2 * m);
        for (k, &i) in pq.iter().enumerate() {
            let d = s[i] - spec[i];
            f[k] = d.re;
            f[m + k] = d.im;
        }
        if f.amax() < tol {
            return Some(NewtonSolution {
                v: vm,
                angle: va,
                loss: s.iter().map(|c| c.re).sum::<f64>() * net.base_mva,
                iterations: it,
            });
        }
        // dS/dθ = j·diag(V)·conj(diag(I) − Y·diag(V)),
        // dS/d|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|).
        let i_bus = &y * &v;
        let j = Complex64::new(0.0, 1.0);
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (r, &a) in pq.iter().enumerate() {
            for (c, &b) in pq.iter().enumerate() {
                let diag_i = if a == b { i_bus[a] } else { Complex64::new(0.0, 0.0) };
                let ds_dva = j * v[a] * (diag_i - y[(a, b)] * v[b]).conj();
                let vn = v[b] / vm[b];
                let mut ds_dvm = v[a] * (y[(a, b)] * vn).conj();
                if a == b {
                    ds_dvm += i_bus[a].conj() * vn;
                }
                jac[(r, c)] = ds_dva.re;
                jac[(r, m + c)] = ds_dvm.re;
                jac[(m + r, c)] = ds_dva.im;
                jac[(m + r, m + c)] = ds_dvm.im;
            }
        }
        let dx = jac.lu().solve(&(-f))?;
        for (k, &i) in pq.iter().enumerate() {
            va[i] += dx[k];
            vm[i] += dx[m + k];
        }
    }
    None
}
