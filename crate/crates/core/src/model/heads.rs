//! Label head, guidance vector and losses.

use super::config::{GuidanceGrad, LabelMode};
use super::layers::{Init, Linear};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Two-layer tanh MLP over node states; returns label logits.
#[derive(Debug, Clone)]
pub struct LabelHead {
    pub hidden: Linear,
    pub out: Linear,
}

impl LabelHead {
    pub fn new(init: &mut Init, name: &str, d: usize, classes: usize) -> Result<Self> {
        Ok(LabelHead {
            hidden: Linear::new(init, &format!("{name}.hidden"), d, d, true)?,
            out: Linear::new(init, &format!("{name}.out"), d, classes, true)?,
        })
    }

    pub fn logits(&self, t: &mut Tape, h: Var) -> Result<Var> {
        let z = self.hidden.forward(t, h)?;
        let z = t.tanh(z);
        self.out.forward(t, z)
    }

    /// Per-node label distribution (softmax over the last axis).
    pub fn forward(&self, t: &mut Tape, h: Var) -> Result<Var> {
        let logits = self.logits(t, h)?;
        let axis = t.shape(logits).len() - 1;
        t.softmax(logits, axis)
    }
}

/// Guidance per node from a label distribution `[.., C]` (column 0 is
/// `NA`); the result drops the class axis.
pub fn guidance(t: &mut Tape, probs: Var, mode: LabelMode, grad: GuidanceGrad) -> Result<Var> {
    let shape = t.shape(probs).to_vec();
    let c = *shape.last().ok_or_else(|| Error::Invalid("guidance from a scalar".into()))?;
    if c != mode.num_classes() {
        return Err(Error::Shape {
            op: "guidance",
            left: shape,
            right: vec![mode.num_classes()],
        });
    }
    let axis = shape.len() - 1;
    let out_shape = &shape[..axis];
    let lambda = match mode {
        LabelMode::Soft => {
            let na = t.slice(probs, axis, 0..1)?;
            let na = t.reshape(na, out_shape)?;
            let neg = t.scale(na, -1.0);
            t.add_scalar(neg, 1.0)
        }
        LabelMode::Merged => {
            let ed = t.slice(probs, axis, 1..2)?;
            t.reshape(ed, out_shape)?
        }
        LabelMode::OneHot => {
            let p = t.value(probs);
            let hard = (0..p.len() / c)
                .map(|r| {
                    let row = &p.data()[r * c..(r + 1) * c];
                    let best = (1..c).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                    if best == 0 {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect();
            return Ok(t.constant(Tensor::new(out_shape.to_vec(), hard)?));
        }
    };
    Ok(match grad {
        GuidanceGrad::Flow => lambda,
        GuidanceGrad::Detach => t.detach(lambda),
    })
}

/// Mean negative log-likelihood of `targets` under `logits` (`[.., C]`),
/// over positions whose target is `Some`. Zero when every position is
/// masked.
pub fn masked_nll(t: &mut Tape, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
    let shape = t.shape(logits).to_vec();
    let c = *shape.last().ok_or_else(|| Error::Invalid("loss over a scalar".into()))?;
    let rows = t.value(logits).len() / c.max(1);
    if targets.len() != rows {
        return Err(Error::Shape {
            op: "nll",
            left: shape,
            right: vec![targets.len()],
        });
    }
    if let Some(bad) = targets.iter().flatten().find(|&&y| y >= c) {
        return Err(Error::Invalid(format!("target class {bad} outside {c} classes")));
    }
    let count = targets.iter().filter(|y| y.is_some()).count();
    if count == 0 {
        return Ok(t.constant(Tensor::scalar(0.0)));
    }
    let flat = t.reshape(logits, &[rows, c])?;
    let lp = t.log_softmax(flat)?;
    let idx: Vec<usize> = targets.iter().map(|y| y.unwrap_or(0)).collect();
    let picked = t.pick(lp, &idx)?;
    let w = -1.0 / count as f64;
    let weights = targets.iter().map(|y| if y.is_some() { w } else { 0.0 }).collect();
    let weights = t.constant(Tensor::vector(weights));
    let weighted = t.mul(picked, weights)?;
    Ok(t.sum(weighted))
}

/// Labeling loss: mean cross-entropy over unmasked nodes.
pub fn eol_loss(t: &mut Tape, label_logits: Var, gold: &[Option<usize>]) -> Result<Var> {
    masked_nll(t, label_logits, gold)
}

/// Generation loss: mean negative log-likelihood over non-padding target
/// positions.
pub fn gen_loss(t: &mut Tape, token_logits: Var, targets: &[Option<usize>]) -> Result<Var> {
    masked_nll(t, token_logits, targets)
}

/// `alpha1 * gen + alpha2 * eol`.
pub fn joint_loss(t: &mut Tape, gen: Var, eol: Var, alpha1: f64, alpha2: f64) -> Result<Var> {
    let a = t.scale(gen, alpha1);
    let b = t.scale(eol, alpha2);
    t.add(a, b)
}
