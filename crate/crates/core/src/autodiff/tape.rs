use std::collections::HashMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{broadcast_shape, Broadcast, Tensor};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool, shared: bool, m: usize, k: usize, n: usize, batch: usize },
    Add { a: Var, b: Var, ba: Broadcast, bb: Broadcast },
    Mul { a: Var, b: Var, ba: Broadcast, bb: Broadcast },
    Scale { x: Var, c: f64 },
    AddScalar { x: Var },
    Relu { x: Var },
    Tanh { x: Var },
    Exp { x: Var },
    Log { x: Var },
    Softmax { x: Var, outer: usize, n: usize, inner: usize },
    LogSoftmax { x: Var, n: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Sum { x: Var },
    Mean { x: Var },
    Concat { parts: Vec<(Var, usize)>, outer: usize, inner: usize },
    Slice { x: Var, outer: usize, axis_len: usize, inner: usize, range: Range<usize> },
    Embedding { table: Var, ids: Vec<usize> },
    Pick { x: Var, idx: Vec<usize> },
    Dropout { x: Var, mask: Vec<f64> },
    Reshape { x: Var },
    Permute { x: Var, map: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records one forward pass for reverse-mode differentiation.
pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    rng: Option<ChaCha8Rng>,
    detached: Detached,
}

/// Gradient checking holds detached values fixed: one pass records them,
/// perturbed passes replay them in order.
#[derive(Debug, Default)]
pub(crate) enum Detached {
    #[default]
    Pass,
    Record(Vec<Tensor>),
    Replay(std::vec::IntoIter<Tensor>),
}

/// Gradients of one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of a parameter; `None` when it was not used on the tape or
    /// does not influence the loss.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.iter().find(|p| p.0 == id).and_then(|p| self.wrt(p.1))
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().filter_map(|&(id, v)| self.wrt(v).map(|g| (id, g)))
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

/// `c (+)= a · b` with `a` logically `m x k`, `b` logically `k x n`; a
/// `true` flag means the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], acc: bool) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserted lengths cover every strided access above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            if acc { 1.0 } else { 0.0 },
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            params: HashMap::new(),
            rng: None,
            detached: Detached::Pass,
        }
    }

    /// A tape on which [`Tape::dropout`] is active, drawing masks from `seed`.
    pub fn training(store: &'p ParamStore, seed: u64) -> Self {
        let mut t = Self::new(store);
        t.rng = Some(ChaCha8Rng::seed_from_u64(seed));
        t
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Input that takes no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input whose gradient is reported by [`Tape::backward`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(self.store.get(id).clone(), Op::Leaf, true);
        self.params.insert(id, v);
        v
    }

    pub fn detach(&mut self, x: Var) -> Var {
        let mut t = self.value(x).clone();
        match &mut self.detached {
            Detached::Pass => {}
            Detached::Record(log) => log.push(t.clone()),
            Detached::Replay(values) => {
                if let Some(v) = values.next().filter(|v| v.shape() == t.shape()) {
                    t = v;
                }
            }
        }
        self.constant(t)
    }

    pub(crate) fn with_detached(store: &'p ParamStore, detached: Detached) -> Self {
        let mut t = Self::new(store);
        t.detached = detached;
        t
    }

    pub(crate) fn take_detached(&mut self) -> Vec<Tensor> {
        match std::mem::take(&mut self.detached) {
            Detached::Record(v) => v,
            _ => Vec::new(),
        }
    }

    /// `a · b` over the last two axes. `b` is either a matrix shared by every
    /// leading index of `a`, or has exactly `a`'s leading axes. With
    /// `trans_b` the last two axes of `b` are read as `n x k`.
    pub fn matmul_ext(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() < 2 || sb.len() < 2 {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = if trans_b {
            (sb[sb.len() - 1], sb[sb.len() - 2])
        } else {
            (sb[sb.len() - 2], sb[sb.len() - 1])
        };
        let shared = sb.len() == 2;
        if kb != k || (!shared && sa[..sa.len() - 2] != sb[..sb.len() - 2]) {
            return Err(shape_err("matmul", sa, sb));
        }
        let batch: usize = sa[..sa.len() - 2].iter().product();
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = n;
        let mut out = vec![0.0; batch * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        if shared {
            gemm(batch * m, k, n, da, false, db, trans_b, &mut out, false);
        } else {
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &da[i * m * k..],
                    false,
                    &db[i * k * n..],
                    trans_b,
                    &mut out[i * m * n..],
                    false,
                );
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::MatMul { a, b, trans_b, shared, m, k, n, batch },
            ng,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_ext(a, b, false)
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, mul: bool) -> Result<Var> {
        let shape = broadcast_shape(self.shape(a), self.shape(b), op)?;
        let ba = Broadcast::new(self.shape(a), &shape);
        let bb = Broadcast::new(self.shape(b), &shape);
        let total: usize = shape.iter().product();
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let out: Vec<f64> = (0..total)
            .map(|o| {
                let (x, y) = (da[ba.index(o)], db[bb.index(o)]);
                if mul {
                    x * y
                } else {
                    x + y
                }
            })
            .collect();
        let ng = self.ng(a) || self.ng(b);
        let t = Tensor::new(shape, out)?;
        let op = if mul { Op::Mul { a, b, ba, bb } } else { Op::Add { a, b, ba, bb } };
        Ok(self.push(t, op, ng))
    }

    /// Elementwise sum with right-aligned broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", false)
    }

    /// Elementwise product with right-aligned broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", true)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x).map(|v| v * c);
        let ng = self.ng(x);
        self.push(t, Op::Scale { x, c }, ng)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x).map(|v| v + c);
        let ng = self.ng(x);
        self.push(t, Op::AddScalar { x }, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.max(0.0));
        let ng = self.ng(x);
        self.push(t, Op::Relu { x }, ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x).map(f64::tanh);
        let ng = self.ng(x);
        self.push(t, Op::Tanh { x }, ng)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let t = self.value(x).map(f64::exp);
        let ng = self.ng(x);
        self.push(t, Op::Exp { x }, ng)
    }

    pub fn log(&mut self, x: Var) -> Var {
        let t = self.value(x).map(f64::ln);
        let ng = self.ng(x);
        self.push(t, Op::Log { x }, ng)
    }

    fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
        let outer = shape[..axis].iter().product();
        let inner = shape[axis + 1..].iter().product();
        (outer, shape[axis], inner)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Invalid(format!("softmax axis {axis} for shape {shape:?}")));
        }
        let (outer, n, inner) = Self::axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let mx = (0..n).map(|j| src[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..n {
                    let e = (src[at(j)] - mx).exp();
                    out[at(j)] = e;
                    z += e;
                }
                for j in 0..n {
                    out[at(j)] /= z;
                }
            }
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { x, outer, n, inner }, ng))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| Error::Invalid("log_softmax of a scalar".into()))?;
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for (row, dst) in src.chunks(n).zip(out.chunks_mut(n)) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            for (d, v) in dst.iter_mut().zip(row) {
                *d = v - lse;
            }
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::LogSoftmax { x, n }, ng))
    }

    /// Normalizes the last axis to zero mean and unit variance, then applies
    /// `gamma * x + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap_or(&0);
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(shape_err("layer_norm", &shape, self.shape(gamma)));
        }
        let src = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let rows = src.len() / d.max(1);
        let mut xhat = vec![0.0; src.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; src.len()];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm { x, gamma, beta, xhat, rstd },
            ng,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.sum() / t.len().max(1) as f64;
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Mean { x }, ng)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*parts.first().ok_or_else(|| Error::Invalid("concat of nothing".into()))?)
            .to_vec();
        if axis >= first.len() {
            return Err(Error::Invalid(format!("concat axis {axis} for shape {first:?}")));
        }
        let mut total = 0;
        let mut sized = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len() || s[..axis] != first[..axis] || s[axis + 1..] != first[axis + 1..] {
                return Err(shape_err("concat", &first, s));
            }
            total += s[axis];
            sized.push((p, s[axis]));
        }
        let (outer, _, inner) = Self::axis_split(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &(p, len) in &sized {
                let d = self.value(p).data();
                out.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat { parts: sized, outer, inner }, ng))
    }

    pub fn slice(&mut self, x: Var, axis: usize, range: Range<usize>) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || range.end > shape[axis] || range.start > range.end {
            return Err(Error::Invalid(format!("slice {range:?} on axis {axis} of {shape:?}")));
        }
        let (outer, axis_len, inner) = Self::axis_split(&shape, axis);
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(outer * range.len() * inner);
        for o in 0..outer {
            let base = o * axis_len * inner;
            out.extend_from_slice(&d[base + range.start * inner..base + range.end * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = range.len();
        let ng = self.ng(x);
        Ok(self.push(
            Tensor::new(new_shape, out)?,
            Op::Slice { x, outer, axis_len, inner, range },
            ng,
        ))
    }

    /// Rows of `table` (`[V, d]`) for each id; result `[ids.len(), d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 {
            return Err(shape_err("embedding", s, &[ids.len()]));
        }
        let (v, d) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Invalid(format!("embedding id {bad} outside table of {v} rows")));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let ng = self.ng(table);
        Ok(self.push(
            Tensor::new(vec![ids.len(), d], out)?,
            Op::Embedding { table, ids: ids.to_vec() },
            ng,
        ))
    }

    /// Picks one entry of the last axis per row: `out[r] = x[r, idx[r]]`.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = *shape.last().ok_or_else(|| Error::Invalid("pick from a scalar".into()))?;
        let rows = self.value(x).len() / c.max(1);
        if idx.len() != rows {
            return Err(shape_err("pick", &shape, &[idx.len()]));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= c) {
            return Err(Error::Invalid(format!("pick index {bad} outside {c} classes")));
        }
        let d = self.value(x).data();
        let out = idx.iter().enumerate().map(|(r, &i)| d[r * c + i]).collect();
        let ng = self.ng(x);
        Ok(self.push(
            Tensor::new(shape[..shape.len() - 1].to_vec(), out)?,
            Op::Pick { x, idx: idx.to_vec() },
            ng,
        ))
    }

    /// Inverted dropout; identity on tapes created without a seed or for
    /// `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Var {
        let Some(rng) = self.rng.as_mut().filter(|_| p > 0.0) else {
            return x;
        };
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.nodes[x.0].value.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(src.shape().to_vec(), data).expect("same length");
        let ng = self.ng(x);
        self.push(t, Op::Dropout { x, mask }, ng)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::Reshape { x }, ng))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(shape_err("permute", &shape, perm));
        }
        let mut in_strides = vec![1; shape.len()];
        for i in (0..shape.len().saturating_sub(1)).rev() {
            in_strides[i] = in_strides[i + 1] * shape[i + 1];
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let total: usize = shape.iter().product();
        let mut map = Vec::with_capacity(total);
        let mut idx = vec![0usize; shape.len()];
        let mut off = 0;
        for _ in 0..total {
            map.push(off);
            for d in (0..out_shape.len()).rev() {
                idx[d] += 1;
                off += strides[d];
                if idx[d] < out_shape[d] {
                    break;
                }
                off -= strides[d] * out_shape[d];
                idx[d] = 0;
            }
        }
        let src = self.value(x).data();
        let data = map.iter().map(|&i| src[i]).collect();
        let ng = self.ng(x);
        Ok(self.push(Tensor::new(out_shape, data)?, Op::Permute { x, map }, ng))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].needs_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.filter(|_| n.needs_grad).map(|g| Tensor::new(n.value.shape().to_vec(), g).expect("grad length")))
            .collect();
        let mut params: Vec<_> = self.params.iter().map(|(&id, &v)| (id, v)).collect();
        params.sort_unstable_by_key(|p| p.0);
        Ok(Gradients { grads, params })
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(&delta) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn acc_with(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl Fn(usize) -> f64) {
        if self.ng(v) {
            let delta = (0..self.value(v).len()).map(f).collect();
            self.acc(grads, v, delta);
        }
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = self.nodes[i].value.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul { a, b, trans_b, shared, m, k, n, batch } => {
                let (da, db) = (self.value(a).data(), self.value(b).data());
                if self.ng(a) {
                    let mut ga = vec![0.0; da.len()];
                    if shared {
                        gemm(batch * m, n, k, g, false, db, !trans_b, &mut ga, false);
                    } else {
                        for t in 0..batch {
                            gemm(m, n, k, &g[t * m * n..], false, &db[t * k * n..], !trans_b, &mut ga[t * m * k..], false);
                        }
                    }
                    self.acc(grads, a, ga);
                }
                if self.ng(b) {
                    let mut gb = vec![0.0; db.len()];
                    let steps = if shared { 1 } else { batch };
                    let rows = if shared { batch * m } else { m };
                    for t in 0..steps {
                        let (ga_, gg, gbb) = (&da[t * rows * k..], &g[t * rows * n..], &mut gb[t * k * n..]);
                        if trans_b {
                            gemm(n, rows, k, gg, true, ga_, false, gbb, false);
                        } else {
                            gemm(k, rows, n, ga_, true, gg, false, gbb, false);
                        }
                    }
                    self.acc(grads, b, gb);
                }
            }
            Op::Add { a, b, ba, bb } => {
                if self.ng(*a) {
                    self.acc(grads, *a, ba.reduce(g, self.value(*a).len()));
                }
                if self.ng(*b) {
                    self.acc(grads, *b, bb.reduce(g, self.value(*b).len()));
                }
            }
            Op::Mul { a, b, ba, bb } => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                if self.ng(*a) {
                    let prod: Vec<f64> = g.iter().enumerate().map(|(o, gv)| gv * db[bb.index(o)]).collect();
                    self.acc(grads, *a, ba.reduce(&prod, da.len()));
                }
                if self.ng(*b) {
                    let prod: Vec<f64> = g.iter().enumerate().map(|(o, gv)| gv * da[ba.index(o)]).collect();
                    self.acc(grads, *b, bb.reduce(&prod, db.len()));
                }
            }
            &Op::Scale { x, c } => self.acc_with(grads, x, |j| g[j] * c),
            &Op::AddScalar { x } => self.acc(grads, x, g.to_vec()),
            &Op::Relu { x } => {
                let d = self.value(x).data();
                self.acc_with(grads, x, |j| if d[j] > 0.0 { g[j] } else { 0.0 });
            }
            &Op::Tanh { x } => self.acc_with(grads, x, |j| g[j] * (1.0 - y[j] * y[j])),
            &Op::Exp { x } => self.acc_with(grads, x, |j| g[j] * y[j]),
            &Op::Log { x } => {
                let d = self.value(x).data();
                self.acc_with(grads, x, |j| g[j] / d[j]);
            }
            &Op::Softmax { x, outer, n, inner } => {
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for t in 0..inner {
                        let at = |j: usize| o * n * inner + j * inner + t;
                        let dot: f64 = (0..n).map(|j| g[at(j)] * y[at(j)]).sum();
                        for j in 0..n {
                            gx[at(j)] = y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                self.acc(grads, x, gx);
            }
            &Op::LogSoftmax { x, n } => {
                let mut gx = vec![0.0; y.len()];
                for ((gr, yr), dst) in g.chunks(n).zip(y.chunks(n)).zip(gx.chunks_mut(n)) {
                    let s: f64 = gr.iter().sum();
                    for j in 0..n {
                        dst[j] = gr[j] - yr[j].exp() * s;
                    }
                }
                self.acc(grads, x, gx);
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let d = self.value(*gamma).len();
                let gm = self.value(*gamma).data();
                if self.ng(*gamma) || self.ng(*beta) {
                    let mut gg = vec![0.0; d];
                    let mut gb = vec![0.0; d];
                    for (r, h) in g.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            gg[j] += r[j] * h[j];
                            gb[j] += r[j];
                        }
                    }
                    self.acc(grads, *gamma, gg);
                    self.acc(grads, *beta, gb);
                }
                if self.ng(*x) {
                    let mut gx = vec![0.0; g.len()];
                    for (row, rs) in rstd.iter().enumerate() {
                        let span = row * d..(row + 1) * d;
                        let (gr, h) = (&g[span.clone()], &xhat[span.clone()]);
                        let dh: Vec<f64> = (0..d).map(|j| gr[j] * gm[j]).collect();
                        let m1 = dh.iter().sum::<f64>() / d as f64;
                        let m2 = dh.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            gx[row * d + j] = rs * (dh[j] - m1 - h[j] * m2);
                        }
                    }
                    self.acc(grads, *x, gx);
                }
            }
            &Op::Sum { x } => self.acc_with(grads, x, |_| g[0]),
            &Op::Mean { x } => {
                let n = self.value(x).len() as f64;
                self.acc_with(grads, x, |_| g[0] / n);
            }
            Op::Concat { parts, outer, inner } => {
                let total: usize = parts.iter().map(|p| p.1).sum();
                let mut offset = 0;
                for &(p, len) in parts {
                    if self.ng(p) {
                        let mut gp = Vec::with_capacity(outer * len * inner);
                        for o in 0..*outer {
                            let base = o * total * inner + offset * inner;
                            gp.extend_from_slice(&g[base..base + len * inner]);
                        }
                        self.acc(grads, p, gp);
                    }
                    offset += len;
                }
            }
            Op::Slice { x, outer, axis_len, inner, range } => {
                let mut gx = vec![0.0; outer * axis_len * inner];
                let w = range.len() * inner;
                for o in 0..*outer {
                    let base = o * axis_len * inner + range.start * inner;
                    gx[base..base + w].copy_from_slice(&g[o * w..(o + 1) * w]);
                }
                self.acc(grads, *x, gx);
            }
            Op::Embedding { table, ids } => {
                let d = self.shape(*table)[1];
                let mut gt = vec![0.0; self.value(*table).len()];
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        gt[id * d + j] += g[r * d + j];
                    }
                }
                self.acc(grads, *table, gt);
            }
            Op::Pick { x, idx } => {
                let c = *self.shape(*x).last().unwrap();
                let mut gx = vec![0.0; self.value(*x).len()];
                for (r, &k) in idx.iter().enumerate() {
                    gx[r * c + k] = g[r];
                }
                self.acc(grads, *x, gx);
            }
            Op::Dropout { x, mask } => self.acc_with(grads, *x, |j| g[j] * mask[j]),
            &Op::Reshape { x } => self.acc(grads, x, g.to_vec()),
            Op::Permute { x, map } => {
                let mut gx = vec![0.0; g.len()];
                for (o, &src) in map.iter().enumerate() {
                    gx[src] = g[o];
                }
                self.acc(grads, *x, gx);
            }
        }
    }
}
