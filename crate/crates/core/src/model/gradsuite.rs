//! Finite-difference checks of every trainable block, shared by the
//! `gradcheck` command and the test suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    eol_loss, guidance, joint_loss, rgcn_forward, Attention, Batch, Guide, GuidanceGrad, Init, LabelHead, LabelMode,
    ModelConfig, RewriteModel, RgcnLayer, MASKED,
};
use crate::autodiff::{grad_check, GradCheck, ParamStore, Tensor, Var};
use crate::corpus::{generate_synthetic, SynthConfig, Vocab};
use crate::error::Result;
use crate::graph::RelationType;

/// Finite-difference step used by the suite.
pub const GRADCHECK_EPS: f64 = 1e-5;
/// Largest relative error the suite accepts.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

impl SuiteEntry {
    fn new(name: impl Into<String>, r: GradCheck) -> Self {
        SuiteEntry {
            name: name.into(),
            max_rel_error: r.max_rel_error,
            worst: r.worst,
            coordinates: r.coordinates,
        }
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOL
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

fn rgcn_check(seed: u64) -> Result<SuiteEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let layers: Vec<RgcnLayer> = {
        let mut init = Init::new(&mut store, seed);
        (0..2)
            .map(|l| RgcnLayer::new(&mut init, &format!("g{l}"), 4))
            .collect::<Result<_>>()?
    };
    // non-zero biases so their gradient is exercised off the origin
    for l in &layers {
        *store.get_mut(l.b) = random(&mut rng, &[5, 4], 0.1);
    }
    let h = store.add("h", random(&mut rng, &[2, 5, 4], 1.0))?;
    let adj: Vec<Tensor> = RelationType::ALL
        .iter()
        .map(|_| {
            let data = (0..50).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
            Tensor::new(vec![2, 5, 5], data).expect("shape matches data")
        })
        .collect();
    let probe = random(&mut rng, &[2, 5, 4], 1.0);
    let ids: Vec<_> = store.ids().collect();
    let r = grad_check(&mut store, &ids, GRADCHECK_EPS, |t| {
        let hv = t.param(h);
        let av: Vec<Var> = adj.iter().map(|a| t.constant(a.clone())).collect();
        let out = rgcn_forward(t, hv, &av, &layers)?;
        let p = t.constant(probe.clone());
        let m = t.mul(out, p)?;
        Ok(t.sum(m))
    })?;
    Ok(SuiteEntry::new("rgcn", r))
}

fn label_head_check(seed: u64) -> Result<SuiteEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let head = LabelHead::new(&mut Init::new(&mut store, seed), "h", 6, 4)?;
    let x = store.add("x", random(&mut rng, &[2, 5, 6], 1.0))?;
    let gold: Vec<Option<usize>> = (0..10).map(|i| if i % 5 == 4 { None } else { Some(i % 4) }).collect();
    let ids: Vec<_> = store.ids().collect();
    let r = grad_check(&mut store, &ids, GRADCHECK_EPS, |t| {
        let xv = t.param(x);
        let z = head.logits(t, xv)?;
        eol_loss(t, z, &gold)
    })?;
    Ok(SuiteEntry::new("label-head", r))
}

fn cross_attention_check(seed: u64, grad: GuidanceGrad) -> Result<SuiteEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let (attn, head) = {
        let mut init = Init::new(&mut store, seed);
        (Attention::new(&mut init, "a", 6, 2)?, LabelHead::new(&mut init, "h", 6, 4)?)
    };
    let q = store.add("q", random(&mut rng, &[2, 3, 6], 1.0))?;
    let mem = store.add("mem", random(&mut rng, &[2, 5, 6], 1.0))?;
    let mask = Tensor::new(vec![2, 1, 1, 5], vec![0., 0., 0., 0., MASKED, 0., 0., 0., 0., 0.])?;
    let probe = random(&mut rng, &[2, 3, 6], 1.0);
    let ids: Vec<_> = store.ids().collect();
    let r = grad_check(&mut store, &ids, GRADCHECK_EPS, |t| {
        let (qv, mv) = (t.param(q), t.param(mem));
        let probs = head.forward(t, mv)?;
        let lambda = guidance(t, probs, LabelMode::Soft, grad)?;
        let m = t.constant(mask.clone());
        let out = attn.forward(t, qv, mv, Some(m), Some(Guide { lambda, tau: 1.0 }))?;
        let p = t.constant(probe.clone());
        let y = t.mul(out, p)?;
        Ok(t.sum(y))
    })?;
    Ok(SuiteEntry::new(format!("guided-cross-attention/{}", grad_name(grad)), r))
}

fn joint_loss_check(seed: u64, grad: GuidanceGrad) -> Result<SuiteEntry> {
    let data = generate_synthetic(&SynthConfig {
        n: 2,
        seed: 13,
        ..Default::default()
    });
    let mut cfg = ModelConfig::tiny();
    cfg.guidance_grad = grad;
    cfg.init_seed = seed;
    let mut model = RewriteModel::new(cfg, Vocab::build(&data))?;
    let enc = data.iter().map(|s| model.encode(s)).collect::<Result<Vec<_>>>()?;
    let batch = Batch::new(&enc.iter().collect::<Vec<_>>(), LabelMode::Soft);
    let shape = model.clone();
    let ids: Vec<_> = model.store().ids().collect();
    let r = grad_check(model.store_mut(), &ids, GRADCHECK_EPS, |t| {
        let l = shape.losses(t, &batch)?;
        joint_loss(t, l.gen, l.eol, 1.0, 1.0)
    })?;
    Ok(SuiteEntry::new(format!("joint-loss/{}", grad_name(grad)), r))
}

fn grad_name(g: GuidanceGrad) -> &'static str {
    match g {
        GuidanceGrad::Flow => "flow",
        GuidanceGrad::Detach => "detach",
    }
}

/// Checks the graph convolution, the label head, guided cross-attention and
/// the full joint loss of a tiny model on a two-sample batch, the last two
/// under both guidance gradient modes.
pub fn gradient_suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut out = vec![rgcn_check(seed)?, label_head_check(seed)?];
    for grad in [GuidanceGrad::Flow, GuidanceGrad::Detach] {
        out.push(cross_attention_check(seed, grad)?);
    }
    for grad in [GuidanceGrad::Flow, GuidanceGrad::Detach] {
        out.push(joint_loss_check(seed, grad)?);
    }
    Ok(out)
}
