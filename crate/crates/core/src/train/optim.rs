use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::Result;

/// Stochastic gradient descent with heavy-ball momentum and L2 weight decay:
/// `g ← ∇ + λ·p`, `v ← μ·v + g` (`v = g` on the first step), `p ← p − η·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: BTreeMap<String, Tensor>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            buffers: BTreeMap::new(),
        }
    }

    pub fn with_buffers(momentum: f64, weight_decay: f64, buffers: BTreeMap<String, Tensor>) -> Self {
        Self {
            momentum,
            weight_decay,
            buffers,
        }
    }

    pub fn buffers(&self) -> &BTreeMap<String, Tensor> {
        &self.buffers
    }

    /// Updates every variable that received a gradient.
    pub fn step(&mut self, vars: &BTreeMap<String, Var>, grads: &GradStore, lr: f64) -> Result<()> {
        for (name, var) in vars {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let p = var.as_tensor().detach();
            let mut g = g.detach();
            if self.weight_decay != 0.0 {
                g = (g + (&p * self.weight_decay)?)?;
            }
            let d = if self.momentum != 0.0 {
                let v = match self.buffers.get(name) {
                    Some(b) => ((b * self.momentum)? + g)?,
                    None => g,
                };
                self.buffers.insert(name.clone(), v.clone());
                v
            } else {
                g
            };
            var.set(&(p - (d * lr)?)?)?;
        }
        Ok(())
    }
}
