use std::f64::consts::{LN_2, PI};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Pre-actions are kept this far inside ±1 so downstream maps see an open interval.
const EDGE: f64 = 1e-9;

/// Reparameterised draw from a tanh-squashed diagonal Gaussian.
#[derive(Debug, Clone)]
pub struct PolicySample {
    /// Pre-actions in (−1, 1), `batch × d`.
    pub action: Array2<f64>,
    pub logp: Array1<f64>,
    tanh_u: Array2<f64>,
    std_xi: Array2<f64>,
    /// 1 where the raw log-std was inside the clamp range, else 0.
    std_live: Array2<f64>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log(1 − tanh²u)` without cancellation for large |u|.
fn log_sech2(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

fn split(out: &ArrayView2<f64>) -> Result<usize> {
    if out.ncols() % 2 != 0 || out.ncols() == 0 {
        return Err(Error::Shape(format!("policy output has {} columns, expected 2·d", out.ncols())));
    }
    Ok(out.ncols() / 2)
}

/// `out` holds `[μ | log σ]` per row; `xi` is standard-normal noise of shape `batch × d`.
pub fn policy_sample(out: ArrayView2<f64>, xi: ArrayView2<f64>) -> Result<PolicySample> {
    let d = split(&out)?;
    if xi.dim() != (out.nrows(), d) {
        return Err(Error::Shape(format!("noise {:?} for policy output {:?}", xi.dim(), out.dim())));
    }
    let mu = out.slice(s![.., ..d]);
    let raw = out.slice(s![.., d..]);
    let (rows, _) = xi.dim();
    let mut action = Array2::zeros((rows, d));
    let mut tanh_u = Array2::zeros((rows, d));
    let mut std_xi = Array2::zeros((rows, d));
    let mut std_live = Array2::zeros((rows, d));
    let mut logp = Array1::zeros(rows);
    for r in 0..rows {
        let mut lp = 0.0;
        for j in 0..d {
            let z = raw[[r, j]];
            if !z.is_finite() || !mu[[r, j]].is_finite() {
                return Err(Error::NonFinite("policy output".into()));
            }
            let log_std = z.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let sx = log_std.exp() * xi[[r, j]];
            let u = mu[[r, j]] + sx;
            let t = u.tanh();
            lp += -0.5 * xi[[r, j]].powi(2) - log_std - 0.5 * (2.0 * PI).ln() - log_sech2(u);
            tanh_u[[r, j]] = t;
            std_xi[[r, j]] = sx;
            std_live[[r, j]] = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&z) { 1.0 } else { 0.0 };
            action[[r, j]] = t.clamp(-1.0 + EDGE, 1.0 - EDGE);
        }
        logp[r] = lp;
    }
    Ok(PolicySample {
        action,
        logp,
        tanh_u,
        std_xi,
        std_live,
    })
}

/// Gradient with respect to `[μ | log σ]` of `Σ d_action ⊙ a + Σ d_logp ⊙ logp`, noise held fixed.
pub fn policy_grad(sample: &PolicySample, d_action: ArrayView2<f64>, d_logp: ArrayView1<f64>) -> Result<Array2<f64>> {
    let (rows, d) = sample.action.dim();
    if d_action.dim() != (rows, d) || d_logp.len() != rows {
        return Err(Error::Shape("policy gradient inputs do not match the sample".into()));
    }
    let mut g = Array2::zeros((rows, 2 * d));
    for r in 0..rows {
        for j in 0..d {
            let t = sample.tanh_u[[r, j]];
            let sx = sample.std_xi[[r, j]];
            let da_du = 1.0 - t * t;
            // d logp/du = 2 tanh u, and du/dμ = 1, du/dlogσ = σξ.
            g[[r, j]] = d_action[[r, j]] * da_du + d_logp[r] * 2.0 * t;
            g[[r, d + j]] =
                sample.std_live[[r, j]] * (d_action[[r, j]] * da_du * sx + d_logp[r] * (-1.0 + 2.0 * t * sx));
        }
    }
    Ok(g)
}

/// `tanh(μ)`, the evaluation-time pre-action.
pub fn deterministic_action(out: ArrayView2<f64>) -> Result<Array2<f64>> {
    let d = split(&out)?;
    let mut a = out.slice(s![.., ..d]).to_owned();
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("policy mean".into()));
    }
    Zip::from(&mut a).for_each(|x| *x = x.tanh().clamp(-1.0 + EDGE, 1.0 - EDGE));
    Ok(a)
}
