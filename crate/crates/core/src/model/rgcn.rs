//! Relational graph convolution over the dialogue graph.

use super::layers::Init;
use crate::autodiff::{ParamId, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::RelationType;

const RELATIONS: usize = RelationType::ALL.len();

/// One layer: a `[d, d]` weight and a `[d]` bias per relation, stored
/// stacked as `[R, d, d]` and `[R, d]`.
#[derive(Debug, Clone)]
pub struct RgcnLayer {
    pub w: ParamId,
    pub b: ParamId,
}

impl RgcnLayer {
    pub fn new(init: &mut Init, name: &str, d: usize) -> Result<Self> {
        // messages are summed over relations and neighbours
        let bound = (3.0 / (RELATIONS * d) as f64).sqrt();
        Ok(RgcnLayer {
            w: init.uniform(&format!("{name}.w"), &[RELATIONS, d, d], bound)?,
            b: init.constant(&format!("{name}.b"), &[RELATIONS, d], 0.0)?,
        })
    }
}

/// Runs `layers` over node states `h` (`[B, K, d]`).
///
/// `adjacency` holds one `[B, K, K]` 0/1 matrix per relation, in
/// [`RelationType::ALL`] order; row `i` marks the neighbours of node `i`.
/// Each layer computes `relu(sum_r (A_r s) W_r + b_r)`, with every
/// relation's bias added at every node.
pub fn rgcn_forward(t: &mut Tape, h: Var, adjacency: &[Var], layers: &[RgcnLayer]) -> Result<Var> {
    if adjacency.len() != RELATIONS {
        return Err(Error::Invalid(format!(
            "expected {RELATIONS} adjacency matrices, got {}",
            adjacency.len()
        )));
    }
    let s = t.shape(h).to_vec();
    if s.len() != 3 {
        return Err(Error::Invalid(format!("graph states must be [B, K, d], got {s:?}")));
    }
    let (b, k, d) = (s[0], s[1], s[2]);
    for &a in adjacency {
        if t.shape(a) != [b, k, k] {
            return Err(Error::Shape {
                op: "rgcn",
                left: t.shape(a).to_vec(),
                right: vec![b, k, k],
            });
        }
    }
    let ones = t.constant(Tensor::ones(&[1, RELATIONS]));
    let mut state = h;
    for layer in layers {
        let mut msgs = Vec::with_capacity(RELATIONS);
        for &a in adjacency {
            msgs.push(t.matmul(a, state)?);
        }
        let stacked = t.concat(&msgs, 2)?;
        let w = t.param(layer.w);
        let w = t.reshape(w, &[RELATIONS * d, d])?;
        let z = t.matmul(stacked, w)?;
        let bias = t.param(layer.b);
        let bias = t.matmul(ones, bias)?;
        let z = t.add(z, bias)?;
        state = t.relu(z);
    }
    Ok(state)
}

/// Elementwise mean of graph and encoder representations.
pub fn fuse(t: &mut Tape, graph: Var, encoder: Var) -> Result<Var> {
    if t.shape(graph) != t.shape(encoder) {
        return Err(Error::Shape {
            op: "fuse",
            left: t.shape(graph).to_vec(),
            right: t.shape(encoder).to_vec(),
        });
    }
    let s = t.add(graph, encoder)?;
    Ok(t.scale(s, 0.5))
}
