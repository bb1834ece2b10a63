use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

/// One stored interaction. The action is the residual pre-action, not the executed setpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpTransition {
    pub s: Vec<f64>,
    pub a_rp: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Stacked minibatch, one row per transition.
#[derive(Debug, Clone)]
pub struct Batch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Array1<f64>,
    pub s_next: Array2<f64>,
    pub done: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn from_transitions(items: &[&MdpTransition]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let (ds, da) = (first.s.len(), first.a_rp.len());
        let n = items.len();
        let mut b = Batch {
            s: Array2::zeros((n, ds)),
            a: Array2::zeros((n, da)),
            r: Array1::zeros(n),
            s_next: Array2::zeros((n, ds)),
            done: Array1::zeros(n),
        };
        for (i, t) in items.iter().enumerate() {
            if t.s.len() != ds || t.s_next.len() != ds || t.a_rp.len() != da {
                return Err(Error::Shape("transitions of different shapes in one batch".into()));
            }
            b.s.row_mut(i).assign(&Array1::from(t.s.clone()));
            b.a.row_mut(i).assign(&Array1::from(t.a_rp.clone()));
            b.s_next.row_mut(i).assign(&Array1::from(t.s_next.clone()));
            b.r[i] = t.r;
            b.done[i] = if t.done { 1.0 } else { 0.0 };
        }
        Ok(b)
    }
}

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<MdpTransition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::new(),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: MdpTransition) -> Result<()> {
        if !t.r.is_finite() {
            return Err(Error::NonFinite("transition reward".into()));
        }
        if let Some(i) = t.a_rp.iter().position(|x| !(x.abs() < 1.0)) {
            return Err(Error::Contract(format!("stored pre-action a_rp[{i}] = {} outside (-1, 1)", t.a_rp[i])));
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<&MdpTransition> {
        self.items.get(i)
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::InvalidArgument("sampling from an empty replay buffer".into()));
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(n, rng)?;
        let items: Vec<&MdpTransition> = idx.iter().map(|&i| &self.items[i]).collect();
        Batch::from_transitions(&items)
    }
}
