//! Transformer building blocks on top of the tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Additive mask value for excluded attention keys.
pub const MASKED: f64 = -1e30;

/// Registers parameters with seeded initial values, in call order.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl<'a> Init<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Init {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        self.store.add(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        self.store.add(name, Tensor::full(shape, value))
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    /// Glorot-uniform `[d_in, d_out]` weight and zero bias.
    pub fn new(init: &mut Init, name: &str, d_in: usize, d_out: usize, bias: bool) -> Result<Self> {
        let bound = (6.0 / (d_in + d_out) as f64).sqrt();
        let w = init.uniform(&format!("{name}.w"), &[d_in, d_out], bound)?;
        let b = if bias {
            Some(init.constant(&format!("{name}.b"), &[d_out], 0.0)?)
        } else {
            None
        };
        Ok(Linear { w, b })
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Result<Var> {
        let w = t.param(self.w);
        let y = t.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = t.param(b);
                t.add(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn new(init: &mut Init, name: &str, d: usize) -> Result<Self> {
        Ok(Norm {
            gamma: init.constant(&format!("{name}.gamma"), &[d], 1.0)?,
            beta: init.constant(&format!("{name}.beta"), &[d], 0.0)?,
        })
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Result<Var> {
        let (g, b) = (t.param(self.gamma), t.param(self.beta));
        t.layer_norm(x, g, b)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(init: &mut Init, name: &str, d: usize, hidden: usize) -> Result<Self> {
        Ok(FeedForward {
            up: Linear::new(init, &format!("{name}.up"), d, hidden, true)?,
            down: Linear::new(init, &format!("{name}.down"), hidden, d, true)?,
        })
    }

    pub fn forward(&self, t: &mut Tape, x: Var, dropout: f64) -> Result<Var> {
        let h = self.up.forward(t, x)?;
        let h = t.relu(h);
        let h = t.dropout(h, dropout);
        self.down.forward(t, h)
    }
}

/// Per-key guidance for cross-attention: logits are rescaled by
/// `tau + lambda` before the softmax.
#[derive(Debug, Clone, Copy)]
pub struct Guide {
    /// `[B, S]`.
    pub lambda: Var,
    pub tau: f64,
}

/// Attention weights from raw scores `[B, H, T, S]`.
///
/// With a guide, each key's logits are multiplied by `tau + lambda[b, s]`;
/// the additive `mask` (broadcastable to the scores) is applied afterwards
/// so masked keys stay excluded whatever the factor.
pub fn attention_weights(t: &mut Tape, scores: Var, guide: Option<Guide>, mask: Option<Var>) -> Result<Var> {
    let mut logits = scores;
    if let Some(g) = guide {
        let s = t.shape(g.lambda).to_vec();
        let lam = t.reshape(g.lambda, &[s[0], 1, 1, s[1]])?;
        let factor = t.add_scalar(lam, g.tau);
        logits = t.mul(logits, factor)?;
    }
    if let Some(m) = mask {
        logits = t.add(logits, m)?;
    }
    let axis = t.shape(logits).len() - 1;
    t.softmax(logits, axis)
}

#[derive(Debug, Clone)]
pub struct Attention {
    pub q: Linear,
    /// No bias: in unguided attention a key bias shifts every logit of a
    /// row by the same amount, so its gradient is identically zero.
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new(init: &mut Init, name: &str, d: usize, heads: usize) -> Result<Self> {
        Ok(Attention {
            q: Linear::new(init, &format!("{name}.q"), d, d, true)?,
            k: Linear::new(init, &format!("{name}.k"), d, d, false)?,
            v: Linear::new(init, &format!("{name}.v"), d, d, true)?,
            o: Linear::new(init, &format!("{name}.o"), d, d, true)?,
            heads,
        })
    }

    fn split(&self, t: &mut Tape, x: Var) -> Result<Var> {
        let s = t.shape(x).to_vec();
        let (b, n, d) = (s[0], s[1], s[2]);
        let x = t.reshape(x, &[b, n, self.heads, d / self.heads])?;
        t.permute(x, &[0, 2, 1, 3])
    }

    /// Raw scaled scores `[B, H, T, S]` of queries `xq` (`[B, T, d]`) against
    /// keys from `xkv` (`[B, S, d]`), plus the head-split values.
    pub fn scores(&self, t: &mut Tape, xq: Var, xkv: Var) -> Result<(Var, Var)> {
        let d = t.shape(xq)[2];
        let q = self.q.forward(t, xq)?;
        let k = self.k.forward(t, xkv)?;
        let v = self.v.forward(t, xkv)?;
        let (q, k, v) = (self.split(t, q)?, self.split(t, k)?, self.split(t, v)?);
        let raw = t.matmul_ext(q, k, true)?;
        let scores = t.scale(raw, 1.0 / ((d / self.heads) as f64).sqrt());
        Ok((scores, v))
    }

    pub fn forward(&self, t: &mut Tape, xq: Var, xkv: Var, mask: Option<Var>, guide: Option<Guide>) -> Result<Var> {
        let (scores, v) = self.scores(t, xq, xkv)?;
        let w = attention_weights(t, scores, guide, mask)?;
        let ctx = t.matmul(w, v)?;
        let ctx = t.permute(ctx, &[0, 2, 1, 3])?;
        let s = t.shape(ctx).to_vec();
        let ctx = t.reshape(ctx, &[s[0], s[1], s[2] * s[3]])?;
        self.o.forward(t, ctx)
    }
}

/// Sinusoidal position table `[len, d]`.
pub fn positions(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for p in 0..len {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = p as f64 / rate;
            data[p * d + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    Tensor::new(vec![len, d], data).expect("sized")
}

/// `[T, T]` additive mask letting position `i` see positions `<= i`.
pub fn causal_mask(len: usize) -> Tensor {
    let mut data = vec![0.0; len * len];
    for i in 0..len {
        for j in i + 1..len {
            data[i * len + j] = MASKED;
        }
    }
    Tensor::new(vec![len, len], data).expect("sized")
}
