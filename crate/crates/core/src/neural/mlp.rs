use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &str = "rmvvc-mlp v1";

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    /// `fan_in × fan_out`, so a batch forward is `x·W + b`.
    w: Array2<f64>,
    b: Array1<f64>,
}

/// Fully connected network, ReLU between layers, linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    /// Inputs to every layer from the last `forward`.
    cache: Option<Vec<Array2<f64>>>,
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.w.len());
        for (w, b) in self.w.iter().zip(&self.b) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn scale(&mut self, k: f64) {
        self.w.iter_mut().for_each(|w| *w *= k);
        self.b.iter_mut().for_each(|b| *b *= k);
    }
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`. Hidden weights are He-uniform, the output layer
    /// uses `U(±1/√fan_in)`, and biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let bound = if l + 1 < n {
                    (6.0 / fan_in as f64).sqrt()
                } else {
                    1.0 / (fan_in as f64).sqrt()
                };
                Layer {
                    w: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound)),
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Mlp { layers, cache: None })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("input has {} columns, network expects {}", x.ncols(), self.input_dim())));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<f64>, mut keep: Option<&mut Vec<Array2<f64>>>) -> Array2<f64> {
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w);
            z += &layer.b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            if let Some(k) = keep.as_deref_mut() {
                k.push(h);
            }
            h = z;
        }
        h
    }

    /// Batch forward (`rows = samples`) that remembers activations for [`Mlp::backward`].
    pub fn forward(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut keep = Vec::with_capacity(self.layers.len());
        let y = self.run(x, Some(&mut keep));
        self.cache = Some(keep);
        Ok(y)
    }

    /// Forward without touching the cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(self.run(x, None))
    }

    /// Gradients of `Σ grad_out ⊙ y` with respect to the parameters and the input.
    /// Consumes the cached forward pass.
    pub fn backward(&mut self, grad_out: ArrayView2<f64>) -> Result<(MlpGrads, Array2<f64>)> {
        let cache = self.cache.take().ok_or(Error::MissingForwardCache)?;
        let (grads, gx) = self.backprop(&cache, grad_out, true, true)?;
        Ok((grads.expect("parameter gradients requested"), gx.expect("input gradient requested")))
    }

    /// [`Mlp::backward`] without the input gradient.
    pub fn backward_params(&mut self, grad_out: ArrayView2<f64>) -> Result<MlpGrads> {
        let cache = self.cache.take().ok_or(Error::MissingForwardCache)?;
        let (grads, _) = self.backprop(&cache, grad_out, true, false)?;
        Ok(grads.expect("parameter gradients requested"))
    }

    /// Input gradient only; the cache is kept and the parameters are untouched. Rows of
    /// `grad_out` that are entirely zero are skipped and get a zero gradient.
    pub fn input_grad(&self, grad_out: ArrayView2<f64>) -> Result<Array2<f64>> {
        let cache = self.cache.as_ref().ok_or(Error::MissingForwardCache)?;
        let live: Vec<usize> = (0..grad_out.nrows())
            .filter(|&i| grad_out.row(i).iter().any(|&g| g != 0.0))
            .collect();
        if live.len() == grad_out.nrows() || grad_out.nrows() != cache[0].nrows() {
            return Ok(self.backprop(cache, grad_out, false, true)?.1.expect("input gradient requested"));
        }
        let mut gx = Array2::zeros((grad_out.nrows(), self.input_dim()));
        if live.is_empty() {
            return Ok(gx);
        }
        let sub: Vec<Array2<f64>> = cache.iter().map(|c| c.select(Axis(0), &live)).collect();
        let g = grad_out.select(Axis(0), &live);
        let part = self.backprop(&sub, g.view(), false, true)?.1.expect("input gradient requested");
        for (k, &i) in live.iter().enumerate() {
            gx.row_mut(i).assign(&part.row(k));
        }
        Ok(gx)
    }

    fn backprop(
        &self,
        cache: &[Array2<f64>],
        grad_out: ArrayView2<f64>,
        want_params: bool,
        want_input: bool,
    ) -> Result<(Option<MlpGrads>, Option<Array2<f64>>)> {
        let rows = cache[0].nrows();
        if grad_out.dim() != (rows, self.output_dim()) {
            return Err(Error::Shape(format!(
                "output gradient {:?}, expected ({rows}, {})",
                grad_out.dim(),
                self.output_dim()
            )));
        }
        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut g = grad_out.to_owned();
        for l in (0..n).rev() {
            let input = &cache[l];
            if want_params {
                gw.push(input.t().dot(&g).as_standard_layout().into_owned());
                gb.push(g.sum_axis(Axis(0)));
            }
            if l == 0 && !want_input {
                break;
            }
            let mut gi = g.dot(&self.layers[l].w.t());
            if l > 0 {
                // The input of layer l is a ReLU output: zero entries pass no gradient.
                ndarray::Zip::from(&mut gi).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            g = gi;
        }
        let grads = want_params.then(|| {
            gw.reverse();
            gb.reverse();
            MlpGrads { w: gw, b: gb }
        });
        Ok((grads, want_input.then_some(g)))
    }

    /// Parameter tensors in the order used by [`MlpGrads::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.w.as_slice_mut().expect("standard layout"));
            out.push(layer.b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn param_lens(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.w.len(), l.b.len()]).collect()
    }

    /// `self ← τ·self + (1 − τ)·other`.
    pub fn soft_update_from(&mut self, other: &Mlp, tau: f64) -> Result<()> {
        if self.sizes() != other.sizes() {
            return Err(Error::Shape("soft update between networks of different shapes".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.zip_mut_with(&b.w, |x, &y| *x = tau * *x + (1.0 - tau) * y);
            a.b.zip_mut_with(&b.b, |x, &y| *x = tau * *x + (1.0 - tau) * y);
        }
        Ok(())
    }

    pub fn parameters_equal(&self, other: &Mlp) -> bool {
        self.layers == other.layers
    }
}

/// Writes the network as text: a header, the layer shapes, then one parameter per line.
pub fn save_checkpoint(net: &Mlp, path: &Path) -> Result<()> {
    let mut s = String::new();
    let sizes = net.sizes();
    writeln!(s, "{CHECKPOINT_MAGIC}").unwrap();
    writeln!(s, "{}", sizes.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")).unwrap();
    for layer in &net.layers {
        for v in layer.w.iter().chain(layer.b.iter()) {
            writeln!(s, "{v}").unwrap();
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Mlp> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::InvalidArgument(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad("not a checkpoint"));
    }
    let sizes: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("missing layer sizes"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad layer size")))
        .collect::<Result<_>>()?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(bad("bad layer sizes"));
    }
    let mut values = lines.map(|l| l.trim().parse::<f64>().map_err(|_| bad("bad parameter value")));
    let mut next = || values.next().unwrap_or_else(|| Err(bad("truncated")));
    let mut layers = Vec::new();
    for l in 0..sizes.len() - 1 {
        let (i, o) = (sizes[l], sizes[l + 1]);
        let w: Vec<f64> = (0..i * o).map(|_| next()).collect::<Result<_>>()?;
        let b: Vec<f64> = (0..o).map(|_| next()).collect::<Result<_>>()?;
        layers.push(Layer {
            w: Array2::from_shape_vec((i, o), w).expect("length checked"),
            b: Array1::from(b),
        });
    }
    if values.next().is_some() {
        return Err(bad("trailing data"));
    }
    Ok(Mlp { layers, cache: None })
}
