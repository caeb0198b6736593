use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use eorewrite_core::corpus::{attach_parses, load_corpus, prepare_sample, save_corpus, PosLexicon, SynthConfig};
use eorewrite_core::graph::{build_graph, validate_graph};
use eorewrite_core::labels::{
    augment_coref_to_ellipsis, augment_ellipsis_to_coref, check_consistency, derive_labels, PronounLexicon,
};
use eorewrite_core::llmaug::{
    augment_samples, token_from_env, ClientConfig, LlmClient, MockTransport, PromptTemplate, UreqTransport,
};
use eorewrite_core::model::gradsuite::{gradient_suite, GRADCHECK_TOL};
use eorewrite_core::model::{checkpoint, GenerateOptions, ModelConfig, Strategy};
use eorewrite_core::train::{guidance_diagnostic, train, OutputDir};
use eorewrite_core::{MetricReport, Sample, TokenizeMode, TrainConfig, Utterance};
use serde_json::json;

use crate::args::*;
use crate::{CliError, CliResult};

pub fn run(cli: Cli) -> CliResult {
    let ctx = Ctx {
        json: cli.json,
        mode: cli.tokenize,
    };
    match cli.command {
        Command::Convert(a) => ctx.convert(a),
        Command::Synth(a) => ctx.synth(a),
        Command::DeriveLabels(a) => ctx.derive_labels(a),
        Command::Check(a) => ctx.check(a),
        Command::AugmentEdit(a) => ctx.augment_edit(a),
        Command::AugmentLlm(a) => ctx.augment_llm(a),
        Command::BuildGraph(a) => ctx.build_graph(a),
        Command::Train(a) => ctx.train(a),
        Command::Rewrite(a) => ctx.rewrite(a),
        Command::Evaluate(a) => ctx.evaluate(a),
        Command::Gradcheck(a) => ctx.gradcheck(a),
    }
}

struct Ctx {
    json: bool,
    mode: TokenizeMode,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn write_lines(path: Option<&Path>, lines: &[String]) -> CliResult {
    let mut w: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for l in lines {
        writeln!(w, "{l}").map_err(|e| CliError::Internal(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Internal(e.to_string()))
}

impl Ctx {
    fn load(&self, path: &Path) -> CliResult<Vec<Sample>> {
        Ok(load_corpus(path, self.mode)?)
    }

    /// JSON to stdout with `--json`, otherwise the text.
    fn emit(&self, value: serde_json::Value, text: impl FnOnce() -> String) {
        if self.json {
            println!("{value}");
        } else {
            print!("{}", text());
        }
    }

    fn convert(&self, a: ConvertArgs) -> CliResult {
        let mut samples = crate::convert::convert(a.from, &a.input, self.mode)?;
        if let Some(p) = &a.parses {
            attach_parses(&mut samples, p)?;
        }
        save_corpus(&samples, &a.output)?;
        self.emit(json!({"samples": samples.len()}), || {
            format!("wrote {} samples to {}\n", samples.len(), a.output.display())
        });
        Ok(())
    }

    fn synth(&self, a: SynthArgs) -> CliResult {
        let defaults = SynthConfig::default();
        let cfg = SynthConfig {
            n: a.n,
            seed: a.seed,
            coref_ratio: a.coref_ratio.unwrap_or(defaults.coref_ratio),
            filler_prob: a.filler_prob.unwrap_or(defaults.filler_prob),
            ..defaults
        };
        for (name, p) in [("coref-ratio", cfg.coref_ratio), ("filler-prob", cfg.filler_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CliError::Input(format!("--{name} must lie in [0, 1], got {p}")));
            }
        }
        let samples = eorewrite_core::corpus::generate_synthetic(&cfg);
        save_corpus(&samples, &a.output)?;
        self.emit(json!({"samples": samples.len(), "seed": cfg.seed}), || {
            format!("wrote {} samples to {}\n", samples.len(), a.output.display())
        });
        Ok(())
    }

    fn derive_labels(&self, a: InOut) -> CliResult {
        let mut samples = self.load(&a.input)?;
        let mut non_extractive = 0;
        for s in &mut samples {
            let d = derive_labels(s);
            if !d.is_extractive() {
                non_extractive += 1;
            }
            s.labels = Some(d.labels);
        }
        save_corpus(&samples, &a.output)?;
        if non_extractive > 0 {
            log::warn!("{non_extractive} sample(s) restore tokens not found in their history");
        }
        self.emit(
            json!({"samples": samples.len(), "non_extractive": non_extractive}),
            || format!("labeled {} samples ({non_extractive} non-extractive)\n", samples.len()),
        );
        Ok(())
    }

    fn check(&self, a: CheckArgs) -> CliResult {
        let mut samples = self.load(&a.input)?;
        let lexicon = PosLexicon::english();
        let mut problems: Vec<String> = Vec::new();
        let mut bad = 0;
        for (i, s) in samples.iter_mut().enumerate() {
            if a.derive {
                s.labels = Some(derive_labels(s).labels);
            }
            let mut found: Vec<String> = check_consistency(s).violations.iter().map(|v| v.to_string()).collect();
            prepare_sample(s, &lexicon);
            let k = eorewrite_core::corpus::linearize(&s.dialogue).len();
            match build_graph(&s.dialogue) {
                Ok(g) => found.extend(validate_graph(&g, k).violations),
                Err(e) => found.push(format!("graph: {e}")),
            }
            if !found.is_empty() {
                bad += 1;
            }
            problems.extend(found.into_iter().map(|v| format!("sample {i}: {v}")));
        }
        for p in problems.iter().take(a.show) {
            eprintln!("{p}");
        }
        self.emit(
            json!({"samples": samples.len(), "failing": bad, "violations": problems.len()}),
            || format!("{} samples, {bad} with violations ({} total)\n", samples.len(), problems.len()),
        );
        if bad > 0 {
            return Err(CliError::Input(format!("{bad} sample(s) failed the consistency check")));
        }
        Ok(())
    }

    fn augment_edit(&self, a: AugmentEditArgs) -> CliResult {
        let samples = self.load(&a.input)?;
        let lexicon = match &a.lexicon {
            Some(p) => PronounLexicon::load(p)?,
            None => PronounLexicon::english(),
        };
        let mut new = Vec::new();
        let mut counts = (0, 0);
        if matches!(a.op, EditOpKind::CorefToEllipsis | EditOpKind::Both) {
            let before = new.len();
            new.extend(samples.iter().filter_map(|s| augment_coref_to_ellipsis(s, &lexicon)));
            counts.0 = new.len() - before;
        }
        if matches!(a.op, EditOpKind::EllipsisToCoref | EditOpKind::Both) {
            let before = new.len();
            new.extend(samples.iter().filter_map(|s| augment_ellipsis_to_coref(s, &lexicon)));
            counts.1 = new.len() - before;
        }
        let mut out = if a.only_new { Vec::new() } else { samples.clone() };
        out.extend(new);
        save_corpus(&out, &a.output)?;
        self.emit(
            json!({"input": samples.len(), "coref_to_ellipsis": counts.0, "ellipsis_to_coref": counts.1, "written": out.len()}),
            || {
                format!(
                    "coref-to-ellipsis: {}, ellipsis-to-coref: {}, wrote {} samples\n",
                    counts.0,
                    counts.1,
                    out.len()
                )
            },
        );
        Ok(())
    }

    fn augment_llm(&self, a: AugmentLlmArgs) -> CliResult {
        let samples = self.load(&a.input)?;
        let template = match &a.template {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::bundled(),
        };
        let config = ClientConfig {
            endpoint: a.endpoint.clone(),
            model: a.model.clone(),
            token: token_from_env(),
            timeout: Duration::from_secs(a.timeout_secs),
            max_retries: a.retries,
            cap: a.cap,
            ..Default::default()
        };
        let client = match a.endpoint.strip_prefix("mock://") {
            Some("echo") => LlmClient::new(MockTransport::echo(), config)?,
            Some(other) => return Err(CliError::Input(format!("unknown mock endpoint `{other}`; use mock://echo"))),
            None => LlmClient::new(UreqTransport, config)?,
        };
        let results = augment_samples(&client, &samples, &template);
        let mut out = if a.keep_original { samples.clone() } else { Vec::new() };
        let mut rejects = Vec::new();
        let mut failures = 0;
        for (i, (s, r)) in samples.iter().zip(results).enumerate() {
            match r {
                Ok(r) => match r.to_sample(s, self.mode) {
                    Some(aug) => out.push(aug),
                    None => rejects.push(json!({"index": i, "result": r}).to_string()),
                },
                Err(e) => {
                    failures += 1;
                    log::warn!("sample {i}: {e}");
                    rejects.push(json!({"index": i, "error": e.to_string()}).to_string());
                }
            }
        }
        save_corpus(&out, &a.output)?;
        if let Some(p) = &a.rejects {
            write_lines(Some(p), &rejects)?;
        }
        let accepted = samples.len() - rejects.len();
        self.emit(
            json!({"input": samples.len(), "accepted": accepted, "rejected": rejects.len() - failures, "failed": failures}),
            || {
                format!(
                    "accepted {accepted}, rejected {}, failed {failures} of {}\n",
                    rejects.len() - failures,
                    samples.len()
                )
            },
        );
        if failures == samples.len() && !samples.is_empty() {
            return Err(CliError::Internal("every request failed".into()));
        }
        Ok(())
    }

    fn build_graph(&self, a: BuildGraphArgs) -> CliResult {
        let samples = self.load(&a.input)?;
        let lexicon = PosLexicon::english();
        let mut dumps = Vec::with_capacity(samples.len());
        let mut totals = std::collections::BTreeMap::<String, usize>::new();
        for mut s in samples {
            prepare_sample(&mut s, &lexicon);
            let g = build_graph(&s.dialogue)?;
            let k = eorewrite_core::corpus::linearize(&s.dialogue).len();
            for (rel, n) in validate_graph(&g, k).counts {
                *totals.entry(rel).or_default() += n;
            }
            dumps.push(g.to_json().to_string());
        }
        if let Some(p) = &a.dump {
            write_lines(Some(p), &dumps)?;
        }
        self.emit(json!({"graphs": dumps.len(), "edges": totals}), || {
            let mut t = format!("{} graphs\n", dumps.len());
            for (rel, n) in &totals {
                t.push_str(&format!("{rel:<20} {n:>8}\n"));
            }
            t
        });
        Ok(())
    }

    fn train(&self, a: TrainArgs) -> CliResult {
        let mut cfg = match &a.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        if a.tiny {
            cfg.model = ModelConfig::tiny();
        }
        for kv in &a.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = a.seed {
            cfg.seed = s;
        }
        if let Some(e) = a.epochs {
            cfg.epochs = e;
            cfg.warmup_epochs = cfg.warmup_epochs.min(e);
        }
        cfg.validate()?;
        let data = self.load(&a.train)?;
        let dev = match &a.dev {
            Some(p) => self.load(p)?,
            None => Vec::new(),
        };
        let out = OutputDir::create(&a.out)?;
        std::fs::write(out.path().join("config.toml"), cfg.to_toml()).map_err(|e| io_err(out.path(), e))?;
        let outcome = train(&data, &dev, &cfg, Some(&out))?;
        let last = outcome.log.epochs.last();
        self.emit(
            json!({
                "epochs": outcome.log.epochs.len(),
                "final": last,
                "best_dev_em": outcome.best.map(|b| b.0),
                "best_epoch": outcome.best.map(|b| b.1),
                "checkpoint": out.last(),
            }),
            || {
                let mut t = String::new();
                if let Some(r) = last {
                    t.push_str(&format!(
                        "trained {} epochs, final joint loss {:.4}\n",
                        outcome.log.epochs.len(),
                        r.joint_loss
                    ));
                }
                if let Some((em, ep)) = outcome.best {
                    t.push_str(&format!("best dev EM {em:.4} at epoch {ep}\n"));
                }
                t.push_str(&format!("checkpoints in {}\n", out.path().display()));
                t
            },
        );
        Ok(())
    }

    fn decode_options(d: &DecodeArgs, guided: bool) -> CliResult<GenerateOptions> {
        let strategy = match d.beam {
            0 => return Err(CliError::Input("--beam must be at least 1".into())),
            1 => Strategy::Greedy,
            k => Strategy::Beam(k),
        };
        Ok(GenerateOptions {
            strategy,
            max_len: d.max_len,
            guided,
        })
    }

    fn rewrite(&self, a: RewriteArgs) -> CliResult {
        let model = checkpoint::load(&a.checkpoint)?;
        let samples = self.load(&a.corpus)?;
        let opts = Self::decode_options(&a.decode, !a.unguided)?;
        let hyps = model.rewrite(&samples, a.decode.batch_size, opts)?;
        let lines: Vec<String> = hyps.iter().map(|h| h.join(" ")).collect();
        write_lines(a.out.as_deref(), &lines)
    }

    fn evaluate(&self, a: EvaluateArgs) -> CliResult {
        let samples = self.load(&a.corpus)?;
        if let Some(ckpt) = &a.checkpoint {
            let model = checkpoint::load(ckpt)?;
            let opts = Self::decode_options(&a.decode, true)?;
            let diag = guidance_diagnostic(&model, &samples, opts, a.decode.batch_size)?;
            if diag.inverted {
                log::warn!("guided decoding has a higher redundant rate than unguided decoding");
            }
            let value = serde_json::to_value(&diag).map_err(|e| CliError::Internal(e.to_string()))?;
            self.emit(value, || diag.to_text());
            return Ok(());
        }
        let hyp_path = a.hyp.as_deref().expect("clap requires --hyp without --checkpoint");
        let text = std::fs::read_to_string(hyp_path).map_err(|e| io_err(hyp_path, e))?;
        let hyps: Vec<Vec<String>> = text
            .lines()
            .map(|l| Utterance::new(1, l, self.mode).words().into_iter().map(String::from).collect())
            .collect();
        if hyps.len() != samples.len() {
            return Err(CliError::Input(format!(
                "{} has {} lines but the corpus has {} samples",
                hyp_path.display(),
                hyps.len(),
                samples.len()
            )));
        }
        let words = |u: &Utterance| -> Vec<String> { u.words().into_iter().map(String::from).collect() };
        let refs: Vec<Vec<String>> = samples.iter().map(|s| words(&s.rewritten)).collect();
        let incs: Vec<Vec<String>> = samples.iter().map(|s| words(&s.dialogue.incomplete)).collect();
        let report = MetricReport::compute(&hyps, &refs, &incs)?;
        let value = serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))?;
        self.emit(value, || report.to_table());
        Ok(())
    }

    fn gradcheck(&self, a: GradcheckArgs) -> CliResult {
        let GradModel::Tiny = a.model;
        let entries = gradient_suite(a.seed)?;
        let max = entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
        let passed = max < GRADCHECK_TOL;
        self.emit(json!({"max_rel_error": max, "passed": passed, "checks": entries}), || {
            let mut t = String::new();
            for e in &entries {
                t.push_str(&format!(
                    "{:<32} {:.3e}  ({} coordinates)\n",
                    e.name, e.max_rel_error, e.coordinates
                ));
            }
            t.push_str(&format!("max relative error {max:.3e}\n"));
            t
        });
        if !passed {
            return Err(CliError::Input(format!(
                "max relative error {max:.3e} is not below {GRADCHECK_TOL:e}"
            )));
        }
        Ok(())
    }
}
