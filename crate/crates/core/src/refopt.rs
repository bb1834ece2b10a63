//! Model-based reactive dispatch.
//!
//! Maximises the penalised reward `r_p + c_v·r_v` over the device box on a given grid
//! model. The search is projected gradient ascent with central finite differences and
//! Armijo backtracking, restarted from the box center and a few seeded random points.
//! Gradient steps stall on the ridges that the voltage penalty's kinks create, so the best
//! start is refined by projected Newton steps on a softplus-smoothed penalty with the
//! smoothing width driven towards zero, and finished by a coordinate pattern search.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actionspace::ActionBox;
use crate::env::{evaluate_action, VoltageLimits};
use crate::error::{Error, Result};
use crate::gridflow::{Injections, Network, PowerFlowSolution};

pub const FD_STEP: f64 = 1e-4;
pub const STEP_TOL: f64 = 1e-5;
pub const MAX_ITERATIONS: usize = 200;
pub const RANDOM_STARTS: usize = 4;
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
/// Pattern-search step sizes, MVar. The last one is the local-optimality resolution.
const POLISH_STEPS: [f64; 3] = [1e-2, 3e-3, 1e-3];
const MAX_POLISH_SWEEPS: usize = 200;
/// Softplus widths, p.u., for the smoothed refinement.
const SMOOTHING: [f64; 6] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
const NEWTON_ITERATIONS: usize = 30;
/// Second-difference step for the loss curvature, MVar.
const HESSIAN_STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct DispatchProblem<'a> {
    pub model: &'a Network,
    pub action_box: ActionBox,
    pub exogenous: Injections,
    pub limits: VoltageLimits,
    pub c_v: f64,
    /// Seeds the random starts.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSolution {
    /// Setpoints, MVar per device.
    pub action: Vec<f64>,
    /// Reward at `action` under the problem's model.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl DispatchProblem<'_> {
    fn validate(&self) -> Result<()> {
        if self.action_box.dim() != self.model.n_devices() {
            return Err(Error::Shape(format!(
                "box has {} dimensions, model has {} devices",
                self.action_box.dim(),
                self.model.n_devices()
            )));
        }
        if self.exogenous.len() != self.model.n_bus() {
            return Err(Error::Shape("exogenous injections do not match the model".into()));
        }
        if !(self.c_v.is_finite() && self.c_v >= 0.0) {
            return Err(Error::InvalidArgument(format!("penalty weight {}", self.c_v)));
        }
        Ok(())
    }

    /// Model reward at `a`, or `None` if the power flow fails.
    pub fn objective(&self, a: &[f64]) -> Option<f64> {
        evaluate_action(self.model, &self.exogenous, a, &self.limits, self.c_v)
            .ok()
            .map(|(r, _)| r.r)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// In-place Cholesky of a symmetric matrix stored row-major; `false` if not positive definite.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        for k in 0..i {
            b[i] -= l[i * n + k] * b[k];
        }
        b[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= l[k * n + i] * b[k];
        }
        b[i] /= l[i * n + i];
    }
}

struct Search<'p, 'a> {
    prob: &'p DispatchProblem<'a>,
    evaluations: usize,
}

impl Search<'_, '_> {
    fn f(&mut self, a: &[f64]) -> Option<f64> {
        self.evaluations += 1;
        self.prob.objective(a)
    }

    fn flow(&mut self, a: &[f64]) -> Option<PowerFlowSolution> {
        self.evaluations += 1;
        let p = self.prob;
        evaluate_action(p.model, &p.exogenous, a, &p.limits, p.c_v).ok().map(|(_, sol)| sol)
    }

    /// Reward with the penalty's hinges replaced by `mu·softplus(·/mu)`.
    fn smoothed(&self, sol: &PowerFlowSolution, mu: f64) -> f64 {
        let lim = &self.prob.limits;
        let pen: f64 = sol
            .v
            .iter()
            .map(|&v| mu * (softplus((v - lim.v_max) / mu) + softplus((lim.v_min - v) / mu)))
            .sum();
        -sol.loss - self.prob.c_v * pen
    }

    /// Loss curvature by second differences.
    fn loss_hessian(&mut self, x: &[f64]) -> Option<Vec<f64>> {
        let n = x.len();
        let h = HESSIAN_STEP;
        let loss = |s: &mut Self, di: Option<(usize, f64)>, dj: Option<(usize, f64)>| {
            let mut p = x.to_vec();
            for (i, d) in [di, dj].into_iter().flatten() {
                p[i] += d;
            }
            s.flow(&p).map(|sol| sol.loss)
        };
        let l0 = loss(self, None, None)?;
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            let up = loss(self, Some((i, h)), None)?;
            let dn = loss(self, Some((i, -h)), None)?;
            hess[i * n + i] = (up - 2.0 * l0 + dn) / (h * h);
            for j in 0..i {
                let pp = loss(self, Some((i, h)), Some((j, h)))?;
                let pm = loss(self, Some((i, h)), Some((j, -h)))?;
                let mp = loss(self, Some((i, -h)), Some((j, h)))?;
                let mm = loss(self, Some((i, -h)), Some((j, -h)))?;
                let v = (pp - pm - mp + mm) / (4.0 * h * h);
                hess[i * n + j] = v;
                hess[j * n + i] = v;
            }
        }
        Some(hess)
    }

    /// Projected Newton ascent on the smoothed reward for each width in turn. The model
    /// Hessian is the loss curvature plus the penalty's Gauss-Newton term. The flag is
    /// whether the narrowest width settled before the iteration cap.
    fn refine(&mut self, mut x: Vec<f64>) -> Option<(Vec<f64>, bool)> {
        let bx = self.prob.action_box.clone();
        let n = x.len();
        let (n_bus, c_v) = (self.prob.model.n_bus(), self.prob.c_v);
        let lim = self.prob.limits;
        let h_loss = self.loss_hessian(&x)?;
        let mut settled = false;
        for &mu in &SMOOTHING {
            let mut sol = self.flow(&x)?;
            let mut fx = self.smoothed(&sol, mu);
            settled = false;
            for _ in 0..NEWTON_ITERATIONS {
                // Central-difference sensitivities of loss and voltages.
                let mut g_loss = vec![0.0; n];
                let mut jac = vec![0.0; n_bus * n];
                let mut probe = x.clone();
                for i in 0..n {
                    probe[i] = x[i] + FD_STEP;
                    let up = self.flow(&probe)?;
                    probe[i] = x[i] - FD_STEP;
                    let dn = self.flow(&probe)?;
                    probe[i] = x[i];
                    g_loss[i] = (up.loss - dn.loss) / (2.0 * FD_STEP);
                    for b in 0..n_bus {
                        jac[b * n + i] = (up.v[b] - dn.v[b]) / (2.0 * FD_STEP);
                    }
                }
                let mut grad: Vec<f64> = g_loss.iter().map(|g| -g).collect();
                let mut curv = h_loss.clone();
                for b in 0..n_bus {
                    let (za, zb) = ((sol.v[b] - lim.v_max) / mu, (lim.v_min - sol.v[b]) / mu);
                    let (sa, sb) = (sigmoid(za), sigmoid(zb));
                    let w = c_v * (sa * (1.0 - sa) + sb * (1.0 - sb)) / mu;
                    let row = &jac[b * n..(b + 1) * n];
                    for i in 0..n {
                        grad[i] -= c_v * (sa - sb) * row[i];
                        if w > 0.0 {
                            for j in 0..n {
                                curv[i * n + j] += w * row[i] * row[j];
                            }
                        }
                    }
                }
                // Coordinates pinned at a face with the gradient pointing outward stay put.
                let free: Vec<usize> = (0..n)
                    .filter(|&i| !((x[i] <= bx.low[i] && grad[i] < 0.0) || (x[i] >= bx.high[i] && grad[i] > 0.0)))
                    .collect();
                if free.is_empty() {
                    settled = true;
                    break;
                }
                let m = free.len();
                let mut step = vec![0.0; n];
                let mut ridge = 0.0;
                loop {
                    let mut a: Vec<f64> = free.iter().flat_map(|&i| free.iter().map(move |&j| (i, j))).map(|(i, j)| curv[i * n + j]).collect();
                    for k in 0..m {
                        a[k * m + k] += ridge;
                    }
                    if cholesky(&mut a, m) {
                        let mut rhs: Vec<f64> = free.iter().map(|&i| grad[i]).collect();
                        cholesky_solve(&a, m, &mut rhs);
                        for (k, &i) in free.iter().enumerate() {
                            step[i] = rhs[k];
                        }
                        break;
                    }
                    let scale = (0..n).map(|i| curv[i * n + i].abs()).fold(1e-12, f64::max);
                    ridge = if ridge == 0.0 { 1e-8 * scale } else { ridge * 10.0 };
                    if ridge > 1e8 * scale {
                        return Some((x, false));
                    }
                }
                let mut t = 1.0;
                let mut moved = None;
                for _ in 0..MAX_BACKTRACKS {
                    let cand = bx.clamp(&x.iter().zip(&step).map(|(xi, si)| xi + t * si).collect::<Vec<_>>());
                    let gain: f64 = cand.iter().zip(&x).zip(&grad).map(|((c, xi), gi)| gi * (c - xi)).sum();
                    if let Some(cs) = self.flow(&cand) {
                        let fc = self.smoothed(&cs, mu);
                        if fc >= fx + ARMIJO_C * gain {
                            moved = Some((cand, cs, fc));
                            break;
                        }
                    }
                    t *= 0.5;
                }
                let Some((cand, cs, fc)) = moved else {
                    settled = true;
                    break;
                };
                let dx = cand.iter().zip(&x).map(|(c, xi)| (c - xi).abs()).fold(0.0, f64::max);
                x = cand;
                sol = cs;
                fx = fc;
                if dx < 1e-9 {
                    settled = true;
                    break;
                }
            }
        }
        Some((x, settled))
    }

    /// Central differences; a coordinate on a box face uses the one-sided difference inward.
    fn gradient(&mut self, x: &[f64], fx: f64) -> Option<Vec<f64>> {
        let bx = &self.prob.action_box;
        let mut g = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            let up = (x[i] + FD_STEP).min(bx.high[i]);
            let dn = (x[i] - FD_STEP).max(bx.low[i]);
            probe[i] = up;
            let fu = if up > x[i] { self.f(&probe)? } else { fx };
            probe[i] = dn;
            let fd = if dn < x[i] { self.f(&probe)? } else { fx };
            probe[i] = x[i];
            g[i] = (fu - fd) / (up - dn);
        }
        Some(g)
    }

    /// Projected gradient ascent from `x0`. Returns the end point, its value, the
    /// iteration count and whether the step-size criterion was met.
    fn ascend(&mut self, x0: Vec<f64>) -> Option<(Vec<f64>, f64, usize, bool)> {
        let bx = &self.prob.action_box;
        let mut x = x0;
        let mut fx = self.f(&x)?;
        let mut t = 1.0;
        for it in 1..=MAX_ITERATIONS {
            let Some(g) = self.gradient(&x, fx) else {
                return Some((x, fx, it, false));
            };
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + t * gi).collect();
                let cand = bx.clamp(&cand);
                let gain: f64 = cand.iter().zip(&x).zip(&g).map(|((c, xi), gi)| gi * (c - xi)).sum();
                if let Some(fc) = self.f(&cand) {
                    if fc >= fx + ARMIJO_C * gain {
                        accepted = Some((cand, fc));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((cand, fc)) = accepted else {
                return Some((x, fx, it, true));
            };
            let step = cand.iter().zip(&x).map(|(c, xi)| (c - xi).abs()).fold(0.0, f64::max);
            x = cand;
            fx = fc;
            if step < STEP_TOL {
                return Some((x, fx, it, true));
            }
            t *= 2.0;
        }
        Some((x, fx, MAX_ITERATIONS, false))
    }

    /// Coordinate pattern search; on return no single ±step move improves the objective.
    fn polish(&mut self, mut x: Vec<f64>, mut fx: f64) -> (Vec<f64>, f64) {
        let bx = self.prob.action_box.clone();
        for &h in &POLISH_STEPS {
            for _ in 0..MAX_POLISH_SWEEPS {
                let mut improved = false;
                for i in 0..x.len() {
                    for dir in [1.0, -1.0] {
                        let mut cand = x.clone();
                        cand[i] = (x[i] + dir * h).clamp(bx.low[i], bx.high[i]);
                        if cand[i] == x[i] {
                            continue;
                        }
                        if let Some(fc) = self.f(&cand) {
                            if fc > fx {
                                x = cand;
                                fx = fc;
                                improved = true;
                            }
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
        }
        (x, fx)
    }
}

/// Best of the multi-start ascent, polished. If no start has a feasible power flow the
/// zero action is returned with `converged = false`.
pub fn solve_dispatch(prob: &DispatchProblem) -> Result<DispatchSolution> {
    prob.validate()?;
    let bx = &prob.action_box;
    let mut rng = ChaCha8Rng::seed_from_u64(prob.seed);
    let mut starts = vec![bx.center()];
    for _ in 0..RANDOM_STARTS {
        starts.push((0..bx.dim()).map(|i| rng.random_range(bx.low[i]..=bx.high[i])).collect());
    }

    let mut search = Search {
        prob,
        evaluations: 0,
    };
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut iterations = 0;
    for x0 in starts {
        if let Some((x, fx, it, ok)) = search.ascend(x0) {
            iterations += it;
            if best.as_ref().is_none_or(|(_, fb, _)| fx > *fb) {
                best = Some((x, fx, ok));
            }
        }
    }
    let Some((x, fx, ok)) = best else {
        return Ok(DispatchSolution {
            action: vec![0.0; bx.dim()],
            objective: f64::NEG_INFINITY,
            iterations,
            converged: false,
        });
    };
    let (x, fx, ok) = match search.refine(x.clone()) {
        Some((r, settled)) => match search.f(&r) {
            Some(fr) if fr > fx => (r, fr, ok || settled),
            _ => (x, fx, ok || settled),
        },
        None => (x, fx, ok),
    };
    let (action, objective) = search.polish(x, fx);
    log::trace!("dispatch solved with {} evaluations", search.evaluations);
    Ok(DispatchSolution {
        action,
        objective,
        iterations,
        converged: ok,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualNormCheck {
    /// `‖a* − a_m‖₂`.
    pub residual_norm: f64,
    /// `‖a*‖₂`.
    pub optimal_norm: f64,
    /// `0 < ‖a* − a_m‖ < ‖a*‖`.
    pub holds: bool,
}

pub fn residual_norm_check(a_m: &[f64], a_star: &[f64]) -> Result<ResidualNormCheck> {
    if a_m.len() != a_star.len() {
        return Err(Error::Shape("reference and optimal actions differ in length".into()));
    }
    let residual_norm = a_star.iter().zip(a_m).map(|(s, m)| (s - m).powi(2)).sum::<f64>().sqrt();
    let optimal_norm = a_star.iter().map(|s| s * s).sum::<f64>().sqrt();
    Ok(ResidualNormCheck {
        residual_norm,
        optimal_norm,
        holds: 0.0 < residual_norm && residual_norm < optimal_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub network: String,
    /// `f64::to_bits` of the impedance factor.
    pub impedance_bits: u64,
    pub seed: u64,
    pub day: usize,
    pub step: usize,
}

impl CacheKey {
    pub fn new(network: &str, impedance_factor: f64, seed: u64, day: usize, step: usize) -> Self {
        CacheKey {
            network: network.to_string(),
            impedance_bits: impedance_factor.to_bits(),
            seed,
            day,
            step,
        }
    }
}

/// Solved dispatches keyed by network, impedance factor, scenario seed, day and step.
#[derive(Debug, Clone, Default)]
pub struct DispatchCache {
    entries: HashMap<CacheKey, DispatchSolution>,
}

const CACHE_HEADER: &str = "network,impedance_factor,seed,day,step,converged,objective,iterations,action";

impl DispatchCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &CacheKey) -> Option<&DispatchSolution> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, key: CacheKey, sol: DispatchSolution) {
        self.entries.insert(key, sol);
    }

    /// Cached solution, or solve and remember.
    pub fn get_or_solve(&mut self, key: CacheKey, prob: &DispatchProblem) -> Result<DispatchSolution> {
        if let Some(sol) = self.entries.get(&key) {
            return Ok(sol.clone());
        }
        let sol = solve_dispatch(prob)?;
        self.entries.insert(key, sol.clone());
        Ok(sol)
    }

    /// Plain CSV, one row per entry, sorted by key; the action is space-separated.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut keys: Vec<&CacheKey> = self.entries.keys().collect();
        keys.sort_by(|a, b| {
            (&a.network, a.impedance_bits, a.seed, a.day, a.step).cmp(&(&b.network, b.impedance_bits, b.seed, b.day, b.step))
        });
        let mut out = String::new();
        out.push_str(CACHE_HEADER);
        out.push('\n');
        for k in keys {
            let s = &self.entries[k];
            let action: Vec<String> = s.action.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                k.network,
                f64::from_bits(k.impedance_bits),
                k.seed,
                k.day,
                k.step,
                s.converged,
                s.objective,
                s.iterations,
                action.join(" ")
            ));
        }
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, what: &str| Error::InvalidArgument(format!("{}:{line}: {what}", path.display()));
        let mut cache = DispatchCache::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if n == 0 {
                if line.trim() != CACHE_HEADER {
                    return Err(bad(1, "unexpected header"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 9 {
                return Err(bad(n + 1, "expected 9 columns"));
            }
            let num = |i: usize| cols[i].trim().parse::<f64>().map_err(|_| bad(n + 1, "bad number"));
            let int = |i: usize| cols[i].trim().parse::<u64>().map_err(|_| bad(n + 1, "bad integer"));
            let key = CacheKey::new(cols[0], num(1)?, int(2)?, int(3)? as usize, int(4)? as usize);
            let action = cols[8]
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(n + 1, "bad action")))
                .collect::<Result<Vec<_>>>()?;
            let sol = DispatchSolution {
                action,
                objective: num(6)?,
                iterations: int(7)? as usize,
                converged: cols[5].trim() == "true",
            };
            cache.insert(key, sol);
        }
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_check_degenerate_cases() {
        let a = [0.5, -0.2];
        let same = residual_norm_check(&a, &a).unwrap();
        assert_eq!(same.residual_norm, 0.0);
        assert!(!same.holds);
        let zero = residual_norm_check(&[0.0, 0.0], &a).unwrap();
        assert_eq!(zero.residual_norm, zero.optimal_norm);
        assert!(!zero.holds);
        assert!(residual_norm_check(&[0.4, -0.1], &a).unwrap().holds);
    }
}
