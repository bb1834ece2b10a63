//! Pre-action and action geometry.
//!
//! Agents emit pre-actions in the open interval (−1, 1). [`linear_map`] sends them to a
//! device box; the residual path clips a per-step residual interval around the reference
//! action ([`residual_bounds`]), maps the residual pre-action into it ([`map_residual`]) and
//! adds it back ([`compose`]). The composed action never leaves the device box.

use std::sync::atomic::{AtomicUsize, Ordering};

use log::warn;

use crate::error::{Error, Result};
use crate::scenario::DeviceSpec;

/// Per-device reactive-power limits, MVar.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBox {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBox {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::Shape(format!("box bounds have lengths {} and {}", low.len(), high.len())));
        }
        if let Some(i) = (0..low.len()).find(|&i| !(low[i] < high[i]) || !low[i].is_finite() || !high[i].is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "action box dimension {i} is empty: [{}, {}]",
                low[i], high[i]
            )));
        }
        Ok(ActionBox { low, high })
    }

    pub fn from_devices(devices: &[DeviceSpec]) -> Result<Self> {
        let (low, high) = devices
            .iter()
            .map(DeviceSpec::q_range)
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        ActionBox::new(low, high)
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| (h + l) / 2.0).collect()
    }

    /// Half-widths `(ā − a̲)/2`.
    pub fn half_range(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| (h - l) / 2.0).collect()
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.dim() && a.iter().enumerate().all(|(i, &x)| self.low[i] <= x && x <= self.high[i])
    }

    pub fn clamp(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .enumerate()
            .map(|(i, &x)| x.clamp(self.low[i], self.high[i]))
            .collect()
    }

    /// Box scaled by `factor` about its center.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let c = self.center();
        let h = self.half_range();
        ActionBox::new(
            c.iter().zip(&h).map(|(c, h)| c - factor * h).collect(),
            c.iter().zip(&h).map(|(c, h)| c + factor * h).collect(),
        )
    }
}

/// Residual interval `[lo, hi]` around a reference action, MVar.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ResidualBounds {
    /// `[a̲ − a_m, ā − a_m]`: the residual space with the same size as the device box.
    pub fn full_box(a_m: &[f64], bx: &ActionBox) -> Result<Self> {
        let a_m = checked_reference(a_m, bx)?;
        Ok(ResidualBounds {
            lo: a_m.iter().zip(&bx.low).map(|(m, l)| l - m).collect(),
            hi: a_m.iter().zip(&bx.high).map(|(m, h)| h - m).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Residual half-width δ per device, set as a fraction λ of each device's half-range.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualConfig {
    pub delta: Vec<f64>,
    pub lambda_scale: f64,
}

impl ResidualConfig {
    pub fn from_lambda(lambda_scale: f64, bx: &ActionBox) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda_scale) {
            return Err(Error::InvalidArgument(format!("residual scale λ={lambda_scale} must lie in [0, 1]")));
        }
        Ok(ResidualConfig {
            delta: bx.half_range().iter().map(|h| lambda_scale * h).collect(),
            lambda_scale,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.delta.iter().all(|&d| d == 0.0)
    }
}

fn check_pre_action(a_p: &[f64], what: &str) -> Result<()> {
    match a_p.iter().position(|x| !(x.abs() < 1.0)) {
        Some(i) => Err(Error::Contract(format!("{what}[{i}] = {} is outside (-1, 1)", a_p[i]))),
        None => Ok(()),
    }
}

/// Clamps a reference action that drifted outside the box by optimizer slack.
static CLAMPED_REFERENCES: AtomicUsize = AtomicUsize::new(0);

/// Reference actions that arrived outside their box and were clamped, process-wide.
pub fn clamped_reference_count() -> usize {
    CLAMPED_REFERENCES.load(Ordering::Relaxed)
}

fn checked_reference(a_m: &[f64], bx: &ActionBox) -> Result<Vec<f64>> {
    if a_m.len() != bx.dim() {
        return Err(Error::Shape(format!("reference action has {} entries, box has {}", a_m.len(), bx.dim())));
    }
    if a_m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("reference action".into()));
    }
    if !bx.contains(a_m) {
        warn!("reference action {a_m:?} outside the device box; clamping");
        CLAMPED_REFERENCES.fetch_add(1, Ordering::Relaxed);
        return Ok(bx.clamp(a_m));
    }
    Ok(a_m.to_vec())
}

/// `a = k·a_p + b` with `k = (ā − a̲)/2`, `b = (ā + a̲)/2`.
pub fn linear_map(a_p: &[f64], bx: &ActionBox) -> Result<Vec<f64>> {
    if a_p.len() != bx.dim() {
        return Err(Error::Shape(format!("pre-action has {} entries, box has {}", a_p.len(), bx.dim())));
    }
    check_pre_action(a_p, "a_p")?;
    Ok((0..a_p.len())
        .map(|i| {
            let k = (bx.high[i] - bx.low[i]) / 2.0;
            let b = (bx.high[i] + bx.low[i]) / 2.0;
            k * a_p[i] + b
        })
        .collect())
}

/// Inverse of [`linear_map`]: the pre-action that lands on `a`.
pub fn inverse_linear_map(a: &[f64], bx: &ActionBox) -> Vec<f64> {
    (0..a.len())
        .map(|i| {
            let k = (bx.high[i] - bx.low[i]) / 2.0;
            let b = (bx.high[i] + bx.low[i]) / 2.0;
            (a[i] - b) / k
        })
        .collect()
}

/// Residual interval clipped so that `[a_m + lo, a_m + hi]` stays inside the box:
///
/// ```text
/// lo = −δ − min(a_m − δ − a̲, 0)
/// hi =  δ − max(a_m + δ − ā, 0)
/// ```
///
/// A reference action slightly outside the box is clamped first (with a warning).
pub fn residual_bounds(a_m: &[f64], cfg: &ResidualConfig, bx: &ActionBox) -> Result<ResidualBounds> {
    if cfg.delta.len() != bx.dim() {
        return Err(Error::Shape(format!("δ has {} entries, box has {}", cfg.delta.len(), bx.dim())));
    }
    if cfg.delta.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::InvalidArgument("residual half-width δ must be non-negative".into()));
    }
    let a_m = checked_reference(a_m, bx)?;
    let mut lo = Vec::with_capacity(a_m.len());
    let mut hi = Vec::with_capacity(a_m.len());
    for i in 0..a_m.len() {
        let d = cfg.delta[i];
        lo.push(-d - f64::min(a_m[i] - d - bx.low[i], 0.0));
        hi.push(d - f64::max(a_m[i] + d - bx.high[i], 0.0));
    }
    Ok(ResidualBounds { lo, hi })
}

/// `a_r = k·a_rp + b` with `k = (hi − lo)/2`, `b = (hi + lo)/2`.
pub fn map_residual(a_rp: &[f64], rb: &ResidualBounds) -> Result<Vec<f64>> {
    if a_rp.len() != rb.dim() {
        return Err(Error::Shape(format!("residual pre-action has {} entries, bounds have {}", a_rp.len(), rb.dim())));
    }
    check_pre_action(a_rp, "a_rp")?;
    Ok((0..a_rp.len())
        .map(|i| {
            let k = (rb.hi[i] - rb.lo[i]) / 2.0;
            let b = (rb.hi[i] + rb.lo[i]) / 2.0;
            k * a_rp[i] + b
        })
        .collect())
}

/// Final action `a = a_m + a_r`.
///
/// For residuals produced by [`map_residual`] the sum is inside the box mathematically; the
/// final clamp only absorbs floating-point rounding at the box edges.
pub fn compose(a_m: &[f64], a_r: &[f64], bx: &ActionBox) -> Result<Vec<f64>> {
    if a_m.len() != bx.dim() || a_r.len() != bx.dim() {
        return Err(Error::Shape("compose: dimension mismatch".into()));
    }
    let a_m = checked_reference(a_m, bx)?;
    Ok((0..a_m.len())
        .map(|i| (a_m[i] + a_r[i]).clamp(bx.low[i], bx.high[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym2() -> ActionBox {
        ActionBox::new(vec![-2.0], vec![2.0]).unwrap()
    }

    #[test]
    fn linear_map_examples() {
        let unit = ActionBox::new(vec![0.0], vec![2.0]).unwrap();
        assert_eq!(linear_map(&[0.0], &unit).unwrap(), vec![1.0]);
        let near = linear_map(&[1.0 - 1e-12], &unit).unwrap()[0];
        assert!((near - 2.0).abs() < 1e-11 && near < 2.0);
        assert_eq!(linear_map(&[0.25], &sym2()).unwrap(), vec![0.5]);
        assert!(matches!(linear_map(&[1.0], &unit), Err(Error::Contract(_))));
        assert!(matches!(linear_map(&[-1.5], &unit), Err(Error::Contract(_))));
        assert!(matches!(linear_map(&[f64::NAN], &unit), Err(Error::Contract(_))));
    }

    #[test]
    fn residual_bounds_examples() {
        let cfg = ResidualConfig { delta: vec![0.5], lambda_scale: 0.25 };
        assert_eq!(residual_bounds(&[0.0], &cfg, &sym2()).unwrap(), ResidualBounds { lo: vec![-0.5], hi: vec![0.5] });
        let rb = residual_bounds(&[1.8], &cfg, &sym2()).unwrap();
        assert_eq!(rb.lo, vec![-0.5]);
        assert!((rb.hi[0] - 0.2).abs() < 1e-15);
        assert_eq!(
            residual_bounds(&[2.0], &cfg, &sym2()).unwrap(),
            ResidualBounds { lo: vec![-0.5], hi: vec![0.0] }
        );
    }

    #[test]
    fn map_residual_examples() {
        let sym = ResidualBounds { lo: vec![-0.5], hi: vec![0.5] };
        assert_eq!(map_residual(&[0.0], &sym).unwrap(), vec![0.0]);
        let skew = ResidualBounds { lo: vec![-0.5], hi: vec![0.2] };
        assert!((map_residual(&[0.0], &skew).unwrap()[0] + 0.15).abs() < 1e-15);
        let top = map_residual(&[1.0 - 1e-12], &skew).unwrap()[0];
        assert!((top - 0.2).abs() < 1e-11);
        assert!(map_residual(&[1.0], &skew).is_err());
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose(&[1.8], &[0.2], &sym2()).unwrap(), vec![2.0]);
        assert_eq!(compose(&[0.7], &[0.0], &sym2()).unwrap(), vec![0.7]);
    }

    #[test]
    fn reference_outside_box_is_clamped() {
        let cfg = ResidualConfig { delta: vec![0.5], lambda_scale: 0.25 };
        let rb = residual_bounds(&[2.0 + 1e-9], &cfg, &sym2()).unwrap();
        assert_eq!(rb.hi, vec![0.0]);
        assert_eq!(compose(&[2.1], &[0.0], &sym2()).unwrap(), vec![2.0]);
    }

    #[test]
    fn lambda_zero_collapses() {
        let bx = ActionBox::new(vec![-1.3, 0.0], vec![1.3, 2.0]).unwrap();
        let cfg = ResidualConfig::from_lambda(0.0, &bx).unwrap();
        assert!(cfg.is_degenerate());
        let a_m = [0.4, 1.1];
        let rb = residual_bounds(&a_m, &cfg, &bx).unwrap();
        assert_eq!(rb.lo, vec![0.0, 0.0]);
        assert_eq!(rb.hi, vec![0.0, 0.0]);
        let a_r = map_residual(&[0.9, -0.3], &rb).unwrap();
        assert_eq!(compose(&a_m, &a_r, &bx).unwrap(), a_m.to_vec());
        assert!(ResidualConfig::from_lambda(1.1, &bx).is_err());
    }

    #[test]
    fn full_box_matches_plain_mapping() {
        let bx = ActionBox::new(vec![-1.3, 0.0], vec![1.3, 2.0]).unwrap();
        let a_m = [0.4, 1.1];
        let rb = ResidualBounds::full_box(&a_m, &bx).unwrap();
        let a_rp = [0.3, -0.6];
        let a = compose(&a_m, &map_residual(&a_rp, &rb).unwrap(), &bx).unwrap();
        let direct = linear_map(&a_rp, &bx).unwrap();
        for (x, y) in a.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_box_rejected() {
        assert!(ActionBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(ActionBox::new(vec![1.0], vec![1.0, 2.0]).is_err());
    }
}
