use eorewrite_core::autodiff::{grad_check, ParamStore, Tape, Tensor, Var};
use eorewrite_core::corpus::{generate_synthetic, SynthConfig, Vocab};
use eorewrite_core::model::checkpoint;
use eorewrite_core::model::{
    attention_weights, eol_loss, fuse, gen_loss, guidance, joint_loss, rgcn_forward, Attention, Batch,
    EncodedSample, GenerateOptions, Guide, GuidanceGrad, Init, LabelHead, LabelMode, ModelConfig, RgcnLayer,
    RewriteModel, Strategy, MASKED,
};
use eorewrite_core::{DialogueGraph, RelationType, Sample};
use proptest::prelude::*;
use proptest::strategy::Strategy as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn samples(n: usize, seed: u64) -> Vec<Sample> {
    generate_synthetic(&SynthConfig {
        n,
        seed,
        ..Default::default()
    })
}

fn tiny_model(data: &[Sample], grad: GuidanceGrad, mode: LabelMode) -> RewriteModel {
    let mut cfg = ModelConfig::tiny();
    cfg.guidance_grad = grad;
    cfg.label_mode = mode;
    cfg.init_seed = 3;
    RewriteModel::new(cfg, Vocab::build(data)).unwrap()
}

fn encode_all(model: &RewriteModel, data: &[Sample]) -> Vec<EncodedSample> {
    data.iter().map(|s| model.encode(s).unwrap()).collect()
}

fn random_adjacency(b: usize, k: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RelationType::ALL
        .iter()
        .map(|_| {
            let data = (0..b * k * k).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
            Tensor::new(vec![b, k, k], data).unwrap()
        })
        .collect()
}

// ---- graph branch --------------------------------------------------------

#[test]
fn no_graph_layers_fuse_back_to_the_encoder_states() {
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let h = t.input(random(&[2, 4, 3], 1));
    let adj: Vec<Var> = random_adjacency(2, 4, 2).into_iter().map(|a| t.constant(a)).collect();
    let g = rgcn_forward(&mut t, h, &adj, &[]).unwrap();
    assert_eq!(t.value(g), t.value(h));
    let f = fuse(&mut t, g, h).unwrap();
    assert_eq!(t.value(f), t.value(h));
}

#[test]
fn fuse_is_the_elementwise_mean() {
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let a = t.input(Tensor::vector(vec![1.0, 4.0, -2.0]));
    let b = t.input(Tensor::vector(vec![3.0, 0.0, 2.0]));
    let f = fuse(&mut t, a, b).unwrap();
    assert_eq!(t.value(f).data(), &[2.0, 2.0, 0.0]);
    let c = t.input(Tensor::vector(vec![1.0]));
    assert!(fuse(&mut t, a, c).is_err());
}

#[test]
fn rgcn_with_only_self_loops_is_a_per_node_map() {
    let mut store = ParamStore::new();
    let layer = RgcnLayer::new(&mut Init::new(&mut store, 5), "g", 3).unwrap();
    let mut t = Tape::new(&store);
    let h = random(&[1, 3, 3], 4);
    let mut adj = vec![Tensor::zeros(&[1, 3, 3]); RelationType::ALL.len()];
    adj[RelationType::SelfLoop.index()] = Tensor::new(vec![1, 3, 3], Tensor::eye(3).into_data()).unwrap();
    let hv = t.input(h.clone());
    let av: Vec<Var> = adj.iter().map(|a| t.constant(a.clone())).collect();
    let out = rgcn_forward(&mut t, hv, &av, std::slice::from_ref(&layer)).unwrap();
    let w = store.get(layer.w);
    let wr = &w.data()[RelationType::SelfLoop.index() * 9..][..9];
    for i in 0..3 {
        for j in 0..3 {
            let z: f64 = (0..3).map(|c| h.data()[i * 3 + c] * wr[c * 3 + j]).sum();
            assert!((t.value(out).data()[i * 3 + j] - z.max(0.0)).abs() < 1e-12);
        }
    }
}

fn permute_rows(x: &Tensor, perm: &[usize]) -> Tensor {
    let (k, d) = (x.shape()[1], x.shape()[2]);
    let mut data = vec![0.0; k * d];
    for (old, &new) in perm.iter().enumerate() {
        data[new * d..(new + 1) * d].copy_from_slice(&x.data()[old * d..(old + 1) * d]);
    }
    Tensor::new(vec![1, k, d], data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rgcn_is_permutation_equivariant(
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        edges in proptest::collection::vec((0usize..5, 0usize..6, 0usize..6), 0..20),
        seed in 0u64..1000,
    ) {
        let k = 6;
        let mut lists = vec![Vec::new(); RelationType::ALL.len()];
        for (r, i, j) in edges {
            lists[r].push((i, j));
            lists[r].push((j, i));
        }
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        let lists: [Vec<(usize, usize)>; 5] = lists.try_into().unwrap();
        let g = DialogueGraph::from_edges(k, lists);
        let gp = g.permuted(&perm);
        let mut store = ParamStore::new();
        let layers: Vec<RgcnLayer> = {
            let mut init = Init::new(&mut store, seed);
            (0..2).map(|l| RgcnLayer::new(&mut init, &format!("g{l}"), 4).unwrap()).collect()
        };
        let h = random(&[1, k, 4], seed + 1);
        let run = |graph: &DialogueGraph, h: Tensor| {
            let mut t = Tape::new(&store);
            let hv = t.input(h);
            let adj: Vec<Var> = RelationType::ALL
                .iter()
                .map(|&r| {
                    let a = graph.dense_adjacency(r, k);
                    t.constant(Tensor::new(vec![1, k, k], a).unwrap())
                })
                .collect();
            let out = rgcn_forward(&mut t, hv, &adj, &layers).unwrap();
            t.value(out).clone()
        };
        let direct = permute_rows(&run(&g, h.clone()), &perm);
        let permuted = run(&gp, permute_rows(&h, &perm));
        prop_assert!(direct.max_abs_diff(&permuted) < 1e-12);
    }
}

// ---- label head and guidance ---------------------------------------------

#[test]
fn label_distributions_are_normalized() {
    for (mode, classes) in [(LabelMode::Soft, 4), (LabelMode::Merged, 2)] {
        let mut store = ParamStore::new();
        let head = LabelHead::new(&mut Init::new(&mut store, 9), "h", 5, mode.num_classes()).unwrap();
        let mut t = Tape::new(&store);
        let x = t.input(random(&[2, 3, 5], 10));
        let p = head.forward(&mut t, x).unwrap();
        assert_eq!(t.shape(p), &[2, 3, classes]);
        for row in t.value(p).data().chunks(classes) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }
}

#[test]
fn zero_output_weights_give_uniform_labels() {
    let mut store = ParamStore::new();
    let head = LabelHead::new(&mut Init::new(&mut store, 9), "h", 5, 4).unwrap();
    store.get_mut(head.out.w).data_mut().fill(0.0);
    store.get_mut(head.out.b.unwrap()).data_mut().fill(0.0);
    let mut t = Tape::new(&store);
    let x = t.input(random(&[1, 3, 5], 2));
    let p = head.forward(&mut t, x).unwrap();
    assert!(t.value(p).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
}

fn guidance_of(row: Vec<f64>, mode: LabelMode) -> f64 {
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let c = row.len();
    let p = t.input(Tensor::new(vec![1, c], row).unwrap());
    let g = guidance(&mut t, p, mode, GuidanceGrad::Flow).unwrap();
    t.value(g).data()[0]
}

#[test]
fn guidance_examples() {
    assert!((guidance_of(vec![0.7, 0.1, 0.1, 0.1], LabelMode::Soft) - 0.3).abs() < 1e-12);
    assert_eq!(guidance_of(vec![1.0, 0.0, 0.0, 0.0], LabelMode::Soft), 0.0);
    assert_eq!(guidance_of(vec![0.4, 0.1, 0.2, 0.3], LabelMode::OneHot), 0.0);
    assert_eq!(guidance_of(vec![0.1, 0.2, 0.3, 0.4], LabelMode::OneHot), 1.0);
    assert!((guidance_of(vec![0.2, 0.8], LabelMode::Merged) - 0.8).abs() < 1e-12);

    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let p = t.input(Tensor::vector(vec![0.5, 0.5]));
    assert!(guidance(&mut t, p, LabelMode::Soft, GuidanceGrad::Flow).is_err());
}

#[test]
fn detached_guidance_blocks_gradient() {
    let store = ParamStore::new();
    for (grad, expect_flow) in [(GuidanceGrad::Flow, true), (GuidanceGrad::Detach, false)] {
        let mut t = Tape::new(&store);
        let p = t.input(Tensor::new(vec![1, 4], vec![0.4, 0.3, 0.2, 0.1]).unwrap());
        let g = guidance(&mut t, p, LabelMode::Soft, grad).unwrap();
        let s = t.sum(g);
        let grads = t.backward(s).unwrap();
        let flowed = grads.wrt(p).is_some_and(|g| g.data()[0] != 0.0);
        assert_eq!(flowed, expect_flow);
    }
}

// ---- guided attention ----------------------------------------------------

fn weights(scores: Vec<f64>, lambda: Vec<f64>, tau: f64) -> Vec<f64> {
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let n = scores.len();
    let s = t.input(Tensor::new(vec![1, 1, 1, n], scores).unwrap());
    let l = t.input(Tensor::new(vec![1, n], lambda).unwrap());
    let w = attention_weights(&mut t, s, Some(Guide { lambda: l, tau }), None).unwrap();
    t.value(w).data().to_vec()
}

#[test]
fn guided_weights_on_the_two_key_fixture() {
    let w = weights(vec![1.0, 1.0], vec![0.0, 1.0], 1.0);
    assert!((w[0] - 0.2689).abs() < 1e-4, "{w:?}");
    assert!((w[1] - 0.7311).abs() < 1e-4, "{w:?}");
}

#[test]
fn zero_guidance_matches_plain_attention() {
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let s = t.input(random(&[2, 3, 4, 5], 8));
    let l = t.input(Tensor::zeros(&[2, 5]));
    let mask = t.constant(Tensor::new(vec![2, 1, 1, 5], vec![0., 0., 0., MASKED, MASKED, 0., 0., 0., 0., 0.]).unwrap());
    let g = attention_weights(&mut t, s, Some(Guide { lambda: l, tau: 1.0 }), Some(mask)).unwrap();
    let p = attention_weights(&mut t, s, None, Some(mask)).unwrap();
    assert!(t.value(g).max_abs_diff(t.value(p)) <= 1e-12);
    // masked keys get no weight
    assert!(t.value(g).data()[3] < 1e-300);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_grows_with_own_guidance_on_positive_scores(
        scores in proptest::collection::vec(-3.0f64..3.0, 2..6),
        lambda in proptest::collection::vec(0.0f64..1.0, 6),
        target in 0usize..6,
        bump in 0.01f64..1.0,
    ) {
        let n = scores.len();
        let i = target % n;
        let mut scores = scores;
        scores[i] = scores[i].abs() + 0.1;
        let lam: Vec<f64> = lambda[..n].to_vec();
        let before = weights(scores.clone(), lam.clone(), 1.0)[i];
        let mut raised = lam;
        raised[i] += bump;
        let after = weights(scores, raised, 1.0)[i];
        prop_assert!(after >= before - 1e-15, "{before} -> {after}");
    }

    #[test]
    fn uniform_guidance_keeps_the_argmax(
        scores in proptest::collection::vec(-3.0f64..3.0, 2..8),
        c in 0.0f64..1.0,
    ) {
        let n = scores.len();
        let plain = weights(scores.clone(), vec![0.0; n], 1.0);
        let guided = weights(scores, vec![c; n], 1.0);
        let arg = |w: &[f64]| (0..w.len()).fold(0, |b, j| if w[j] > w[b] { j } else { b });
        prop_assert_eq!(arg(&plain), arg(&guided));
    }
}

// ---- losses --------------------------------------------------------------

#[test]
fn uniform_logits_give_log_class_count() {
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let z = t.input(Tensor::zeros(&[2, 3, 4]));
    let gold = [Some(0), Some(1), None, Some(3), Some(2), None];
    let l = eol_loss(&mut t, z, &gold).unwrap();
    assert!((t.value(l).item() - 4f64.ln()).abs() < 1e-12);

    let v = 37;
    let z = t.input(Tensor::zeros(&[1, 3, v]));
    let l = gen_loss(&mut t, z, &[Some(5), Some(36), None]).unwrap();
    assert!((t.value(l).item() - (v as f64).ln()).abs() < 1e-12);

    let z = t.input(random(&[1, 2, 1], 3));
    let l = gen_loss(&mut t, z, &[Some(0), Some(0)]).unwrap();
    assert!(t.value(l).item().abs() < 1e-15);

    let l = gen_loss(&mut t, z, &[None, None]).unwrap();
    assert_eq!(t.value(l).item(), 0.0);
    assert!(gen_loss(&mut t, z, &[Some(1), None]).is_err());
    assert!(gen_loss(&mut t, z, &[Some(0)]).is_err());
}

#[test]
fn joint_loss_is_linear_in_values_and_gradients() {
    let data = samples(3, 5);
    let model = tiny_model(&data, GuidanceGrad::Flow, LabelMode::Soft);
    let enc = encode_all(&model, &data);
    let batch = Batch::new(&enc.iter().collect::<Vec<_>>(), LabelMode::Soft);
    let (a1, a2) = (0.7, 1.9);
    let mut t = Tape::new(model.store());
    let l = model.losses(&mut t, &batch).unwrap();
    let j = joint_loss(&mut t, l.gen, l.eol, a1, a2).unwrap();
    let (g, e) = (t.value(l.gen).item(), t.value(l.eol).item());
    assert!((t.value(j).item() - (a1 * g + a2 * e)).abs() < 1e-12);

    let gj = t.backward(j).unwrap();
    let gg = t.backward(l.gen).unwrap();
    let ge = t.backward(l.eol).unwrap();
    for id in model.store().ids() {
        let zero = Tensor::zeros(model.store().get(id).shape());
        let pick = |g: &eorewrite_core::autodiff::Gradients| g.param(id).cloned().unwrap_or_else(|| zero.clone());
        let (j, g, e) = (pick(&gj), pick(&gg), pick(&ge));
        for ((j, g), e) in j.data().iter().zip(g.data()).zip(e.data()) {
            assert!((j - (a1 * g + a2 * e)).abs() <= 1e-12 * (1.0 + j.abs()));
        }
    }
}

#[test]
fn without_label_weight_the_label_head_learns_only_through_guidance() {
    let data = samples(2, 9);
    for grad in [GuidanceGrad::Flow, GuidanceGrad::Detach] {
        let model = tiny_model(&data, grad, LabelMode::Soft);
        let enc = encode_all(&model, &data);
        let batch = Batch::new(&enc.iter().collect::<Vec<_>>(), LabelMode::Soft);
        let mut t = Tape::new(model.store());
        let l = model.losses(&mut t, &batch).unwrap();
        let j = joint_loss(&mut t, l.gen, l.eol, 1.0, 0.0).unwrap();
        let gj = t.backward(j).unwrap();
        let gg = t.backward(l.gen).unwrap();
        for id in model.label_head_params() {
            let size = model.store().get(id).len();
            let a = gj.param(id).map_or(vec![0.0; size], |g| g.data().to_vec());
            let b = gg.param(id).map_or(vec![0.0; size], |g| g.data().to_vec());
            assert_eq!(a, b, "label weight leaked into {}", model.store().name(id));
            if grad == GuidanceGrad::Detach {
                assert!(a.iter().all(|&x| x == 0.0));
            }
        }
    }
}

// ---- gradient checks -----------------------------------------------------

const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

#[test]
fn gradcheck_rgcn_layer() {
    let mut store = ParamStore::new();
    let layers: Vec<RgcnLayer> = {
        let mut init = Init::new(&mut store, 21);
        (0..2).map(|l| RgcnLayer::new(&mut init, &format!("g{l}"), 4).unwrap()).collect()
    };
    for l in &layers {
        let b = random(&[5, 4], 40).map(|v| v * 0.1);
        *store.get_mut(l.b) = b;
    }
    let h = store.add("h", random(&[2, 5, 4], 22)).unwrap();
    let adj = random_adjacency(2, 5, 23);
    let probe = random(&[2, 5, 4], 24);
    let ids: Vec<_> = store.ids().collect();
    let r = grad_check(&mut store, &ids, EPS, |t| {
        let hv = t.param(h);
        let av: Vec<Var> = adj.iter().map(|a| t.constant(a.clone())).collect();
        let out = rgcn_forward(t, hv, &av, &layers)?;
        let p = t.constant(probe.clone());
        let m = t.mul(out, p)?;
        Ok(t.sum(m))
    })
    .unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn gradcheck_label_head() {
    let mut store = ParamStore::new();
    let head = LabelHead::new(&mut Init::new(&mut store, 31), "h", 6, 4).unwrap();
    let x = store.add("x", random(&[2, 5, 6], 32)).unwrap();
    let gold: Vec<Option<usize>> = (0..10).map(|i| if i % 5 == 4 { None } else { Some(i % 4) }).collect();
    let ids: Vec<_> = store.ids().collect();
    let r = grad_check(&mut store, &ids, EPS, |t| {
        let xv = t.param(x);
        let z = head.logits(t, xv)?;
        eol_loss(t, z, &gold)
    })
    .unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn gradcheck_guided_cross_attention() {
    for grad in [GuidanceGrad::Flow, GuidanceGrad::Detach] {
        let mut store = ParamStore::new();
        let (attn, head) = {
            let mut init = Init::new(&mut store, 41);
            (
                Attention::new(&mut init, "a", 6, 2).unwrap(),
                LabelHead::new(&mut init, "h", 6, 4).unwrap(),
            )
        };
        let q = store.add("q", random(&[2, 3, 6], 42)).unwrap();
        let mem = store.add("mem", random(&[2, 5, 6], 43)).unwrap();
        let mask = Tensor::new(vec![2, 1, 1, 5], vec![0., 0., 0., 0., MASKED, 0., 0., 0., 0., 0.]).unwrap();
        let probe = random(&[2, 3, 6], 44);
        let ids: Vec<_> = store.ids().collect();
        let r = grad_check(&mut store, &ids, EPS, |t| {
            let (qv, mv) = (t.param(q), t.param(mem));
            let probs = head.forward(t, mv)?;
            let lambda = guidance(t, probs, LabelMode::Soft, grad)?;
            let m = t.constant(mask.clone());
            let out = attn.forward(t, qv, mv, Some(m), Some(Guide { lambda, tau: 1.0 }))?;
            let p = t.constant(probe.clone());
            let y = t.mul(out, p)?;
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(r.max_rel_error < TOL, "{grad:?}: {r:?}");
    }
}

#[test]
fn gradcheck_full_joint_loss_on_two_samples() {
    let data = samples(2, 13);
    for (seed, grad) in [0, 1, 2].into_iter().flat_map(|s| [(s, GuidanceGrad::Flow), (s, GuidanceGrad::Detach)]) {
        let mut cfg = ModelConfig::tiny();
        cfg.guidance_grad = grad;
        cfg.init_seed = seed;
        let mut model = RewriteModel::new(cfg, Vocab::build(&data)).unwrap();
        let enc = encode_all(&model, &data);
        let batch = Batch::new(&enc.iter().collect::<Vec<_>>(), LabelMode::Soft);
        let shape = model.clone();
        let ids: Vec<_> = model.store().ids().collect();
        let r = grad_check(model.store_mut(), &ids, EPS, |t| {
            let l = shape.losses(t, &batch)?;
            joint_loss(t, l.gen, l.eol, 1.0, 1.0)
        })
        .unwrap();
        assert!(r.max_rel_error < TOL, "seed {seed} {grad:?}: {r:?}");
    }
}

// ---- decoding and persistence --------------------------------------------

#[test]
fn single_beam_equals_greedy() {
    let data = samples(6, 17);
    let model = tiny_model(&data, GuidanceGrad::Flow, LabelMode::Soft);
    let beam = |k| GenerateOptions {
        strategy: k,
        max_len: Some(12),
        guided: true,
    };
    let greedy = model.rewrite(&data, 4, beam(Strategy::Greedy)).unwrap();
    let one = model.rewrite(&data, 4, beam(Strategy::Beam(1))).unwrap();
    assert_eq!(greedy, one);
    let wide = model.rewrite(&data, 4, beam(Strategy::Beam(3))).unwrap();
    assert_eq!(wide.len(), data.len());
    assert!(model.rewrite(&data, 4, beam(Strategy::Beam(0))).is_err());
}

#[test]
fn one_step_budget_yields_empty_rewrites() {
    let data = samples(3, 19);
    let model = tiny_model(&data, GuidanceGrad::Flow, LabelMode::Soft);
    let opts = GenerateOptions {
        max_len: Some(1),
        ..Default::default()
    };
    for out in model.rewrite(&data, 2, opts).unwrap() {
        assert!(out.is_empty());
    }
    for out in model.rewrite(&data, 2, GenerateOptions { max_len: Some(5), ..opts }).unwrap() {
        assert!(out.len() <= 4);
    }
}

#[test]
fn outputs_do_not_depend_on_batch_composition() {
    let data = samples(5, 23);
    let model = tiny_model(&data, GuidanceGrad::Flow, LabelMode::Soft);
    let opts = GenerateOptions {
        max_len: Some(10),
        ..Default::default()
    };
    let together = model.rewrite(&data, 5, opts).unwrap();
    let alone = model.rewrite(&data, 1, opts).unwrap();
    assert_eq!(together, alone);
    let mut rev = data.clone();
    rev.reverse();
    let mut back = model.rewrite(&rev, 5, opts).unwrap();
    back.reverse();
    assert_eq!(together, back);
}

#[test]
fn losses_are_invariant_to_batch_order() {
    let data = samples(4, 29);
    let model = tiny_model(&data, GuidanceGrad::Flow, LabelMode::Soft);
    let enc = encode_all(&model, &data);
    let run = |items: Vec<&EncodedSample>| {
        let batch = Batch::new(&items, LabelMode::Soft);
        let mut t = Tape::new(model.store());
        let l = model.losses(&mut t, &batch).unwrap();
        (t.value(l.gen).item(), t.value(l.eol).item())
    };
    let a = run(enc.iter().collect());
    let b = run(enc.iter().rev().collect());
    assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
}

#[test]
fn checkpoints_round_trip_exactly() {
    let data = samples(4, 31);
    let model = tiny_model(&data, GuidanceGrad::Detach, LabelMode::Merged);
    let bytes = checkpoint::to_bytes(&model).unwrap();
    assert_eq!(&bytes[..8], checkpoint::MAGIC);
    let back = checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.config(), model.config());
    assert_eq!(back.vocab().tokens(), model.vocab().tokens());
    assert_eq!(checkpoint::to_bytes(&back).unwrap(), bytes);
    let opts = GenerateOptions {
        max_len: Some(8),
        ..Default::default()
    };
    assert_eq!(model.rewrite(&data, 2, opts).unwrap(), back.rewrite(&data, 2, opts).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&model, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(checkpoint::to_bytes(&checkpoint::load(&path).unwrap()).unwrap(), bytes);
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let data = samples(2, 37);
    let bytes = checkpoint::to_bytes(&tiny_model(&data, GuidanceGrad::Flow, LabelMode::Soft)).unwrap();
    let mut v2 = bytes.clone();
    v2[8..12].copy_from_slice(&2u32.to_le_bytes());
    let err = checkpoint::from_bytes(&v2).unwrap_err().to_string();
    assert!(err.contains("version 2"), "{err}");
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(checkpoint::from_bytes(&extra).is_err());
    assert!(checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    assert!(checkpoint::from_bytes(b"not a checkpoint at all").is_err());
    assert!(checkpoint::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err().is_input_error());
}

#[test]
fn oversized_streams_are_rejected() {
    let data = samples(2, 41);
    let mut cfg = ModelConfig::tiny();
    cfg.max_len = 8;
    let model = RewriteModel::new(cfg, Vocab::build(&data)).unwrap();
    assert!(model.encode(&data[0]).is_err());
}

#[test]
fn config_validation_and_mode_names() {
    assert!(ModelConfig::default().validate().is_ok());
    assert!(ModelConfig { heads: 3, ..ModelConfig::default() }.validate().is_err());
    assert!(ModelConfig { tau_d: 0.0, ..ModelConfig::default() }.validate().is_err());
    assert!(ModelConfig { tau_d: f64::NAN, ..ModelConfig::default() }.validate().is_err());
    assert_eq!(ModelConfig::default().tau_d, 1.0);

    assert_eq!("one-hot".parse::<LabelMode>().unwrap(), LabelMode::OneHot);
    assert_eq!(LabelMode::Merged.num_classes(), 2);
    assert!("hard".parse::<LabelMode>().is_err());
    assert_eq!("detach".parse::<GuidanceGrad>().unwrap(), GuidanceGrad::Detach);
}
