//! Training loop, optimizer and dev evaluation.

mod config;
mod optim;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{schedule, OptimizerKind, TrainConfig};
pub use optim::{global_norm, Optimizer};

use crate::autodiff::Tape;
use crate::corpus::{write_corpus, Sample, Vocab};
use crate::error::{Error, Result};
use crate::labels::{augment_coref_to_ellipsis, augment_ellipsis_to_coref, PronounLexicon};
use crate::metrics::MetricReport;
use crate::model::{checkpoint, joint_loss, Batch, EncodedSample, GenerateOptions, RewriteModel};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub gen_loss: f64,
    pub eol_loss: f64,
    pub joint_loss: f64,
    pub label_accuracy: f64,
    pub dev_em: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub model: RewriteModel,
    pub log: TrainLog,
    /// Best dev exact match and the epoch it was reached at.
    pub best: Option<(f64, usize)>,
}

/// Where a run writes `last.ckpt`, `best.ckpt` and `train_log.jsonl`.
#[derive(Debug, Clone)]
pub struct OutputDir(PathBuf);

impl OutputDir {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        std::fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        Ok(OutputDir(path))
    }

    pub fn path(&self) -> &Path {
        &self.0
    }

    pub fn last(&self) -> PathBuf {
        self.0.join("last.ckpt")
    }

    pub fn best(&self) -> PathBuf {
        self.0.join("best.ckpt")
    }

    pub fn log(&self) -> PathBuf {
        self.0.join("train_log.jsonl")
    }

    pub fn nonfinite_dump(&self) -> PathBuf {
        self.0.join("nonfinite_batch.jsonl")
    }
}

/// Training set with the configured edit-based augmentations appended.
pub fn augmented_training_set(samples: &[Sample], config: &TrainConfig) -> Vec<Sample> {
    let mut out = samples.to_vec();
    let lexicon = PronounLexicon::english();
    if config.augment_coref_to_ellipsis {
        out.extend(samples.iter().filter_map(|s| augment_coref_to_ellipsis(s, &lexicon)));
    }
    if config.augment_ellipsis_to_coref {
        out.extend(samples.iter().filter_map(|s| augment_ellipsis_to_coref(s, &lexicon)));
    }
    out
}

/// Builds the vocabulary from the (augmented) training set, initializes a
/// model from `config.model` seeded with `config.seed`, and trains it.
pub fn train(
    samples: &[Sample],
    dev: &[Sample],
    config: &TrainConfig,
    out: Option<&OutputDir>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let data = augmented_training_set(samples, config);
    let vocab = Vocab::build(&data);
    let mut mc = config.model.clone();
    mc.init_seed = config.seed;
    let model = RewriteModel::new(mc, vocab)?;
    train_model(model, &data, dev, config, out)
}

/// Trains an existing model on `samples` as given.
pub fn train_model(
    mut model: RewriteModel,
    samples: &[Sample],
    dev: &[Sample],
    config: &TrainConfig,
    out: Option<&OutputDir>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    let encoded = samples.iter().map(|s| model.encode(s)).collect::<Result<Vec<_>>>()?;
    let dev_encoded = dev.iter().map(|s| model.encode(s)).collect::<Result<Vec<_>>>()?;
    let mode = model.config().label_mode;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optim = Optimizer::new(config, model.store());
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize)> = None;
    let mut log_file = match out {
        Some(o) => Some(BufWriter::new(File::create(o.log()).map_err(|e| Error::io(o.log(), e))?)),
        None => None,
    };

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let (a1, a2) = schedule(epoch, config);
        order.shuffle(&mut rng);
        let (mut gen_sum, mut eol_sum, mut joint_sum) = (0.0, 0.0, 0.0);
        let (mut correct, mut labelled) = (0usize, 0usize);
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        for (bi, idx) in batches.iter().enumerate() {
            let items: Vec<&EncodedSample> = idx.iter().map(|&i| &encoded[i]).collect();
            let batch = Batch::new(&items, mode);
            let dropout_seed: u64 = rng.random();
            let (grads, losses) = {
                let mut t = Tape::training(model.store(), dropout_seed);
                let l = model.losses(&mut t, &batch)?;
                let joint = joint_loss(&mut t, l.gen, l.eol, a1, a2)?;
                let values = (t.value(l.gen).item(), t.value(l.eol).item(), t.value(joint).item());
                let (c, n) = label_hits(t.value(l.source.label_logits).data(), &batch.labels);
                correct += c;
                labelled += n;
                if !values.2.is_finite() {
                    return Err(nonfinite(out, samples, epoch, bi, idx));
                }
                (t.backward(joint)?, values)
            };
            let norm = global_norm(&grads);
            if !norm.is_finite() {
                return Err(nonfinite(out, samples, epoch, bi, idx));
            }
            let scale = if config.clip_norm > 0.0 && norm > config.clip_norm {
                config.clip_norm / norm
            } else {
                1.0
            };
            let lr = learning_rate(config, optim.steps() + 1);
            optim.update(model.store_mut(), &grads, lr, scale);
            gen_sum += losses.0;
            eol_sum += losses.1;
            joint_sum += losses.2;
        }
        let nb = batches.len() as f64;
        let last_epoch = epoch + 1 == config.epochs;
        let dev_em = if !dev_encoded.is_empty() && ((epoch + 1) % config.eval_every == 0 || last_epoch) {
            let refs: Vec<&EncodedSample> = dev_encoded.iter().collect();
            Some(evaluate_encoded(&model, &refs, GenerateOptions::default(), config.eval_batch_size)?.em)
        } else {
            None
        };
        if let Some(o) = out {
            checkpoint::save(&model, o.last())?;
        }
        if let Some(em) = dev_em {
            if best.is_none_or(|(b, _)| em > b) {
                best = Some((em, epoch));
                if let Some(o) = out {
                    checkpoint::save(&model, o.best())?;
                }
            }
        }
        let record = EpochRecord {
            epoch,
            alpha1: a1,
            alpha2: a2,
            gen_loss: gen_sum / nb,
            eol_loss: eol_sum / nb,
            joint_loss: joint_sum / nb,
            label_accuracy: if labelled == 0 { 0.0 } else { correct as f64 / labelled as f64 },
            dev_em,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: gen {:.4} eol {:.4} label acc {:.4} dev EM {} ({:.1}s)",
            record.gen_loss,
            record.eol_loss,
            record.label_accuracy,
            dev_em.map_or("-".to_string(), |e| format!("{e:.4}")),
            record.seconds
        );
        if let (Some(f), Some(o)) = (log_file.as_mut(), out) {
            writeln!(f, "{}", serde_json::to_string(&record)?)
                .and_then(|_| f.flush())
                .map_err(|e| Error::io(o.log(), e))?;
        }
        log.epochs.push(record);
    }
    Ok(TrainOutcome { model, log, best })
}

/// Linear warm-up over `lr_warmup_steps`, constant afterwards.
fn learning_rate(config: &TrainConfig, step: u64) -> f64 {
    let w = config.lr_warmup_steps as f64;
    if w > 0.0 && (step as f64) < w {
        config.learning_rate * step as f64 / w
    } else {
        config.learning_rate
    }
}

fn label_hits(logits: &[f64], gold: &[Option<usize>]) -> (usize, usize) {
    let c = logits.len() / gold.len().max(1);
    let mut hits = 0;
    let mut n = 0;
    for (row, g) in logits.chunks(c).zip(gold) {
        if let Some(g) = g {
            let arg = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
                .0;
            hits += usize::from(arg == *g);
            n += 1;
        }
    }
    (hits, n)
}

fn nonfinite(out: Option<&OutputDir>, samples: &[Sample], epoch: usize, batch: usize, idx: &[usize]) -> Error {
    if let Some(o) = out {
        let offending: Vec<Sample> = idx.iter().map(|&i| samples[i].clone()).collect();
        match File::create(o.nonfinite_dump()) {
            Ok(f) => {
                if let Err(e) = write_corpus(&offending, BufWriter::new(f)) {
                    log::error!("could not dump offending batch: {e}");
                } else {
                    log::error!("offending batch written to {}", o.nonfinite_dump().display());
                }
            }
            Err(e) => log::error!("could not dump offending batch: {e}"),
        }
    }
    Error::NonFinite {
        epoch,
        batch,
        samples: idx.to_vec(),
    }
}

fn evaluate_encoded(
    model: &RewriteModel,
    items: &[&EncodedSample],
    opts: GenerateOptions,
    batch_size: usize,
) -> Result<MetricReport> {
    let mut hyps = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch_size.max(1)) {
        hyps.extend(model.generate(chunk, opts)?);
    }
    let refs: Vec<Vec<String>> = items.iter().map(|e| e.reference.clone()).collect();
    let incs: Vec<Vec<String>> = items.iter().map(|e| e.incomplete.clone()).collect();
    MetricReport::compute(&hyps, &refs, &incs)
}

/// Decodes every sample and scores the result against its rewrite.
pub fn evaluate_dev(
    model: &RewriteModel,
    samples: &[Sample],
    opts: GenerateOptions,
    batch_size: usize,
) -> Result<MetricReport> {
    let encoded = samples.iter().map(|s| model.encode(s)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&EncodedSample> = encoded.iter().collect();
    evaluate_encoded(model, &refs, opts, batch_size)
}

/// The same checkpoint scored with and without attention guidance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceDiagnostic {
    pub guided: MetricReport,
    /// Guidance forced to zero.
    pub unguided: MetricReport,
    /// Set when the guided run produces more redundant tokens than the
    /// unguided one, the opposite of what guidance is for.
    pub inverted: bool,
}

impl GuidanceDiagnostic {
    pub fn to_text(&self) -> String {
        let mut out = String::from("guided\n");
        out.push_str(&self.guided.to_table());
        out.push_str("\nunguided (guidance forced to 0)\n");
        out.push_str(&self.unguided.to_table());
        out.push_str(&format!(
            "\nredundant rate: guided {:.4}, unguided {:.4}\n",
            self.guided.redundant_rate, self.unguided.redundant_rate
        ));
        if self.inverted {
            out.push_str("WARNING: guidance raised the redundant rate\n");
        }
        out
    }
}

/// Decodes `samples` twice, with guidance on and off.
pub fn guidance_diagnostic(
    model: &RewriteModel,
    samples: &[Sample],
    opts: GenerateOptions,
    batch_size: usize,
) -> Result<GuidanceDiagnostic> {
    let encoded = samples.iter().map(|s| model.encode(s)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&EncodedSample> = encoded.iter().collect();
    let guided = evaluate_encoded(model, &refs, GenerateOptions { guided: true, ..opts }, batch_size)?;
    let unguided = evaluate_encoded(model, &refs, GenerateOptions { guided: false, ..opts }, batch_size)?;
    let inverted = guided.redundant_rate > unguided.redundant_rate;
    Ok(GuidanceDiagnostic {
        guided,
        unguided,
        inverted,
    })
}
