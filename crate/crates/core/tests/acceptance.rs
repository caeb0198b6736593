//! Release acceptance checks. Runs every criterion, prints one PASS/FAIL
//! line each and exits non-zero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use common::oracle::{oracle_bleu, oracle_restoration, random_case};
use common::tolstoy;
use eorewrite_core::autodiff::{ParamStore, Tape, Tensor};
use eorewrite_core::corpus::{generate_synthetic, linearize, SynthConfig};
use eorewrite_core::labels::{
    align, apply_script, augment_coref_to_ellipsis, augment_ellipsis_to_coref, check_consistency, derive_labels,
    PronounLexicon,
};
use eorewrite_core::llmaug::{
    augment_samples, build_prompt, ClientConfig, LlmClient, MockReply, MockTransport, PromptTemplate, INSTRUCTION,
};
use eorewrite_core::metrics::{bleu, restoration};
use eorewrite_core::model::gradsuite::{gradient_suite, GRADCHECK_TOL};
use eorewrite_core::model::{attention_weights, checkpoint, GenerateOptions, Guide, ModelConfig, MASKED};
use eorewrite_core::train::{evaluate_dev, guidance_diagnostic, schedule, train, TrainConfig};
use eorewrite_core::{RewriteModel, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn label_fidelity() -> Outcome {
    let s = tolstoy();
    let d = derive_labels(&s);
    let lin = linearize(&s.dialogue);
    let mut turns = vec![Vec::new(); lin.marker_positions.len()];
    for (p, prov) in lin.provenance.iter().enumerate() {
        if !prov.is_speaker_marker {
            turns[prov.utterance].push(d.labels[p].as_str());
        }
    }
    let got: Vec<String> = turns.iter().map(|t| t.join(" ")).collect();
    let want = ["NA NA NA IN IN NA", "NA NA NW NA", "RP NA NA NA NA"];
    ensure(got == want, || format!("got {got:?}"))?;
    Ok(got.join(" / "))
}

fn alignment_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let alphabet = ["the", "a", "he", "it", "book", "Anna"];
    let gen = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let n = rng.random_range(0..12);
        (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())].to_string()).collect()
    };
    let mut ok = 0;
    for i in 0..1000 {
        let (u, v) = (gen(&mut rng), gen(&mut rng));
        let back = apply_script(&u, &align(&u, &v)).map_err(|e| format!("pair {i}: {e}"))?;
        ensure(back == v, || format!("pair {i}: {u:?} -> {v:?} gave {back:?}"))?;
        ok += 1;
    }
    Ok(format!("{ok}/1000 pairs round-trip"))
}

fn consistency_sweep() -> Outcome {
    let samples = generate_synthetic(&SynthConfig {
        n: 1000,
        seed: 3,
        ..Default::default()
    });
    let mut ok = 0;
    for (i, mut s) in samples.into_iter().enumerate() {
        s.labels = Some(derive_labels(&s).labels);
        let r = check_consistency(&s);
        ensure(r.is_ok(), || format!("sample {i}: {:?}", r.violations))?;
        ok += 1;
    }
    Ok(format!("{ok}/1000 samples consistent"))
}

fn gradient_soundness() -> Outcome {
    let start = Instant::now();
    let entries = gradient_suite(0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let worst = entries
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .expect("non-empty suite");
    for e in &entries {
        ensure(e.max_rel_error < GRADCHECK_TOL, || {
            format!("{} has relative error {:.3e} at {:?}", e.name, e.max_rel_error, e.worst)
        })?;
    }
    ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} checks, max {:.2e} ({}), {secs:.1}s",
        entries.len(),
        worst.max_rel_error,
        worst.name
    ))
}

fn guided_attention_values() -> Outcome {
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let s = t.input(Tensor::new(vec![1, 1, 1, 2], vec![1.0, 1.0]).unwrap());
    let l = t.input(Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap());
    let w = attention_weights(&mut t, s, Some(Guide { lambda: l, tau: 1.0 }), None).map_err(|e| e.to_string())?;
    let w = t.value(w).data().to_vec();
    ensure((w[0] - 0.2689).abs() <= 1e-4 && (w[1] - 0.7311).abs() <= 1e-4, || {
        format!("weights {w:?}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scores: Vec<f64> = (0..2 * 3 * 4 * 5).map(|_| rng.random_range(-3.0..3.0)).collect();
    let s = t.input(Tensor::new(vec![2, 3, 4, 5], scores).unwrap());
    let zero = t.input(Tensor::zeros(&[2, 5]));
    let mask = t.constant(Tensor::new(vec![2, 1, 1, 5], vec![0., 0., 0., MASKED, MASKED, 0., 0., 0., 0., 0.]).unwrap());
    let g = attention_weights(&mut t, s, Some(Guide { lambda: zero, tau: 1.0 }), Some(mask))
        .map_err(|e| e.to_string())?;
    let p = attention_weights(&mut t, s, None, Some(mask)).map_err(|e| e.to_string())?;
    let diff = t.value(g).max_abs_diff(t.value(p));
    ensure(diff <= 1e-12, || format!("zero guidance differs by {diff:e}"))?;
    Ok(format!("[{:.4}, {:.4}], zero-guidance diff {diff:.1e}", w[0], w[1]))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for case in 0..500 {
        let (c, r, i) = random_case(&mut rng);
        for n in 1..=4 {
            let got = bleu(&c, &r, n).map_err(|e| e.to_string())?;
            let d = (got - oracle_bleu(&c, &r, n)).abs();
            ensure(d <= 1e-9, || format!("case {case} BLEU-{n} off by {d:e}"))?;
            worst = worst.max(d);
        }
        for n in 1..=3 {
            let got = restoration(&c, &r, &i, n).map_err(|e| e.to_string())?;
            let (p, rr, f) = oracle_restoration(&c, &r, &i, n);
            let d = (got.p - p).abs().max((got.r - rr).abs()).max((got.f - f).abs());
            ensure(d <= 1e-9, || format!("case {case} restoration-{n} off by {d:e}"))?;
            worst = worst.max(d);
        }
    }
    let toks = |s: &str| -> Vec<Vec<String>> { vec![s.split_whitespace().map(String::from).collect()] };
    let f = restoration(
        &toks("Tolstoy is the author ."),
        &toks("Tolstoy is the author of Anna Karenina ."),
        &toks("He is the author ."),
        1,
    )
    .map_err(|e| e.to_string())?
    .f;
    ensure((f - 0.4).abs() <= 1e-12, || format!("running-example F1 {f}"))?;
    Ok(format!("500 cases, max deviation {worst:.1e}; running-example F1 = {f}"))
}

fn schedule_fidelity() -> Outcome {
    let cfg = TrainConfig::default();
    ensure(cfg.warmup_epochs == 3, || format!("warm-up {} epochs", cfg.warmup_epochs))?;
    ensure(cfg.model.tau_d == 1.0, || format!("tau_d {}", cfg.model.tau_d))?;
    for e in 0..3 {
        ensure(schedule(e, &cfg) == (1.0, 0.0), || format!("epoch {e}: {:?}", schedule(e, &cfg)))?;
    }
    for e in 3..cfg.epochs {
        ensure(schedule(e, &cfg) == (1.0, 1.0), || format!("epoch {e}: {:?}", schedule(e, &cfg)))?;
    }
    // and as applied by the training loop
    let data = generate_synthetic(&SynthConfig {
        n: 8,
        seed: 4,
        ..Default::default()
    });
    let run = TrainConfig {
        epochs: 5,
        batch_size: 8,
        model: ModelConfig::tiny(),
        ..cfg
    };
    let out = train(&data, &[], &run, None).map_err(|e| e.to_string())?;
    let applied: Vec<(f64, f64)> = out.log.epochs.iter().map(|r| (r.alpha1, r.alpha2)).collect();
    let want = [(1.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 1.0), (1.0, 1.0)];
    ensure(applied == want, || format!("logged {applied:?}"))?;
    Ok("alpha2 = 0 for epochs 0-2, (1, 1) from epoch 3, tau_d = 1".into())
}

/// Training and held-out sets for the desk-scale run. Held-out samples that
/// also occur in the training set are skipped.
fn desk_data() -> (Vec<Sample>, Vec<Sample>) {
    let all = generate_synthetic(&SynthConfig {
        n: 3000,
        seed: 11,
        ..Default::default()
    });
    let (train, rest) = all.split_at(2000);
    let key = |s: &Sample| (linearize(&s.dialogue).tokens, s.rewritten.text.clone());
    let seen: std::collections::HashSet<_> = train.iter().map(key).collect();
    let held: Vec<Sample> = rest.iter().filter(|s| !seen.contains(&key(s))).take(200).cloned().collect();
    (train.to_vec(), held)
}

fn desk_config() -> TrainConfig {
    TrainConfig {
        epochs: 8,
        seed: 5,
        ..Default::default()
    }
}

fn desk_training(trained: &Mutex<Option<(RewriteModel, Vec<Sample>)>>) -> Outcome {
    let (data, held) = desk_data();
    ensure(held.len() == 200, || format!("only {} held-out samples", held.len()))?;
    let cfg = desk_config();
    let m = &cfg.model;
    ensure(
        (m.d_model, m.enc_layers, m.dec_layers, m.heads, m.rgcn_layers) == (64, 2, 2, 4, 2),
        || format!("model config {m:?}"),
    )?;
    let start = Instant::now();
    let first = train(&data, &[], &cfg, None).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let report = evaluate_dev(&first.model, &held, GenerateOptions::default(), 32).map_err(|e| e.to_string())?;
    let second = train(&data, &[], &cfg, None).map_err(|e| e.to_string())?;
    let a = checkpoint::to_bytes(&first.model).map_err(|e| e.to_string())?;
    let b = checkpoint::to_bytes(&second.model).map_err(|e| e.to_string())?;
    *trained.lock().unwrap() = Some((first.model, held));
    ensure(report.em >= 0.90, || format!("held-out EM {:.4}", report.em))?;
    ensure(secs <= 1800.0, || format!("training took {secs:.0}s"))?;
    ensure(a == b, || "same seed gave different checkpoints".into())?;
    Ok(format!(
        "held-out EM {:.4} after {} epochs in {secs:.0}s; rerun checkpoint identical ({} bytes)",
        report.em,
        cfg.epochs,
        a.len()
    ))
}

fn guidance_report(trained: &Mutex<Option<(RewriteModel, Vec<Sample>)>>) -> Outcome {
    let guard = trained.lock().unwrap();
    let (model, held) = guard.as_ref().ok_or("no trained model (desk-scale training failed)")?;
    let d = guidance_diagnostic(model, held, GenerateOptions::default(), 32).map_err(|e| e.to_string())?;
    let text = d.to_text();
    ensure(text.contains("redundant rate"), || "report lacks the redundant rate".into())?;
    Ok(format!(
        "redundant rate guided {:.4} vs unguided {:.4}{}",
        d.guided.redundant_rate,
        d.unguided.redundant_rate,
        if d.inverted { " (INVERTED, flagged)" } else { "" }
    ))
}

fn augmentation_integrity() -> Outcome {
    let lex = PronounLexicon::english();
    let samples = generate_synthetic(&SynthConfig {
        n: 500,
        seed: 21,
        ..Default::default()
    });
    let (mut c2e, mut e2c) = (0, 0);
    for (i, s) in samples.iter().enumerate() {
        if let Some(a) = augment_coref_to_ellipsis(s, &lex) {
            ensure(a.rewritten == s.rewritten, || format!("sample {i}: coref-to-ellipsis changed the rewrite"))?;
            c2e += 1;
        }
        if let Some(a) = augment_ellipsis_to_coref(s, &lex) {
            ensure(a.rewritten == s.rewritten, || format!("sample {i}: ellipsis-to-coref changed the rewrite"))?;
            e2c += 1;
        }
    }
    ensure(c2e > 0 && e2c > 0, || format!("augmentations applied {c2e} / {e2c} times"))?;

    let instruction = "Given a dialogue with utterances from different speakers separated by semicolons, keep the last utterance unchanged, rewrite the historical utterances, and keep the semantics of the dialogue unchanged.";
    ensure(INSTRUCTION == instruction, || "instruction sentence differs".into())?;
    let few = &samples[..20];
    let template = PromptTemplate::bundled();
    let fast = || ClientConfig {
        endpoint: "mock://test".into(),
        cap: 4,
        backoff: std::time::Duration::from_millis(1),
        ..Default::default()
    };

    let prompts = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&prompts);
    let echo = MockTransport::new(move |p| {
        seen.lock().unwrap().push(p.to_string());
        let input = p.rsplit_once("\nInput: ").map_or(p, |(_, s)| s);
        MockReply::Text(input.to_string())
    });
    let client = LlmClient::new(echo, fast()).map_err(|e| e.to_string())?;
    let results = augment_samples(&client, few, &template);
    let accepted = results.iter().filter(|r| r.as_ref().is_ok_and(|r| r.is_accepted())).count();
    ensure(accepted == few.len(), || format!("{accepted}/{} well-formed replies accepted", few.len()))?;
    let prompts = prompts.lock().unwrap();
    ensure(prompts.len() == few.len(), || format!("{} prompts sent", prompts.len()))?;
    ensure(prompts.iter().all(|p| p.contains(instruction)), || "a prompt lacks the instruction".into())?;
    for s in few {
        ensure(build_prompt(s, &PromptTemplate::without_examples()).contains(instruction), || {
            "zero-example prompt lacks the instruction".into()
        })?;
    }

    let padded = MockTransport::new(|p| {
        let input = p.rsplit_once("\nInput: ").map_or(p, |(_, s)| s);
        MockReply::Text(format!("an extra turn; {input}"))
    });
    let client = LlmClient::new(padded, fast()).map_err(|e| e.to_string())?;
    let results = augment_samples(&client, few, &template);
    let rejected = results.iter().filter(|r| r.as_ref().is_ok_and(|r| !r.is_accepted())).count();
    ensure(rejected == few.len(), || format!("{rejected}/{} count-mismatched replies rejected", few.len()))?;

    Ok(format!(
        "rewrite unchanged on 500 samples ({c2e} coref-to-ellipsis, {e2c} ellipsis-to-coref); mock: {accepted} accepted, {rejected} rejected"
    ))
}

fn main() {
    let trained = Mutex::new(None);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("label derivation on the running example", Box::new(label_fidelity)),
        ("alignment round trip", Box::new(alignment_oracle)),
        ("label consistency sweep", Box::new(consistency_sweep)),
        ("gradient soundness", Box::new(gradient_soundness)),
        ("guided attention unit values", Box::new(guided_attention_values)),
        ("metric oracle equivalence", Box::new(metric_oracle)),
        ("loss weight schedule", Box::new(schedule_fidelity)),
        ("desk-scale training", Box::new(|| desk_training(&trained))),
        ("guidance diagnostic", Box::new(|| guidance_report(&trained))),
        ("augmentation integrity", Box::new(augmentation_integrity)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
