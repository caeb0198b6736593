use crate::autodiff::{Gradients, ParamStore, Tensor};

use super::config::{OptimizerKind, TrainConfig};

/// Plain SGD or Adam over every parameter of a store.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(config: &TrainConfig, store: &ParamStore) -> Self {
        let zeros = || store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect();
        let adam = config.optimizer == OptimizerKind::Adam;
        Optimizer {
            kind: config.optimizer,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            step: 0,
            m: if adam { zeros() } else { Vec::new() },
            v: if adam { zeros() } else { Vec::new() },
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update with learning rate `lr`; gradients are scaled by `scale`
    /// first (used for clipping).
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64, scale: f64) {
        self.step += 1;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t));
        for (id, g) in grads.params() {
            let p = store.get_mut(id).data_mut();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, gi) in p.iter_mut().zip(g.data()) {
                        *w -= lr * scale * gi;
                    }
                }
                OptimizerKind::Adam => {
                    let m = self.m[id.index()].data_mut();
                    let v = self.v[id.index()].data_mut();
                    for (((w, gi), mi), vi) in p.iter_mut().zip(g.data()).zip(m).zip(v) {
                        let g = gi * scale;
                        *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                        *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                        *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

/// L2 norm over all parameter gradients.
pub fn global_norm(grads: &Gradients) -> f64 {
    grads
        .params()
        .map(|(_, g)| g.data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}
