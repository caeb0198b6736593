use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use eorewrite_bench::{prepared_corpus, words};
use eorewrite_core::autodiff::Tape;
use eorewrite_core::corpus::Vocab;
use eorewrite_core::graph::build_graph;
use eorewrite_core::labels::{align, derive_labels};
use eorewrite_core::metrics::MetricReport;
use eorewrite_core::model::{joint_loss, Batch, GenerateOptions, LabelMode, ModelConfig, RewriteModel};

fn labels(c: &mut Criterion) {
    let samples = prepared_corpus(200, 1);
    c.bench_function("align/200", |b| {
        b.iter(|| {
            for s in &samples {
                black_box(align(&s.dialogue.incomplete.words(), &s.rewritten.words()));
            }
        })
    });
    c.bench_function("derive_labels/200", |b| {
        b.iter(|| {
            for s in &samples {
                black_box(derive_labels(s));
            }
        })
    });
    c.bench_function("build_graph/200", |b| {
        b.iter(|| {
            for s in &samples {
                black_box(build_graph(&s.dialogue).unwrap());
            }
        })
    });
}

fn metrics(c: &mut Criterion) {
    let samples = prepared_corpus(1000, 2);
    let refs: Vec<Vec<String>> = samples.iter().map(|s| words(&s.rewritten)).collect();
    let incs: Vec<Vec<String>> = samples.iter().map(|s| words(&s.dialogue.incomplete)).collect();
    // candidates: the incomplete utterances, i.e. a do-nothing rewriter
    c.bench_function("metric_report/1000", |b| {
        b.iter(|| black_box(MetricReport::compute(&incs, &refs, &incs).unwrap()))
    });
}

fn model(c: &mut Criterion) {
    let samples = prepared_corpus(32, 3);
    let model = RewriteModel::new(ModelConfig::default(), Vocab::build(&samples)).unwrap();
    let enc: Vec<_> = samples.iter().map(|s| model.encode(s).unwrap()).collect();
    let refs: Vec<_> = enc.iter().collect();
    let batch = Batch::new(&refs, LabelMode::Soft);
    let mut group = c.benchmark_group("model");
    group.sample_size(10);
    group.bench_function("forward_backward/batch32", |b| {
        b.iter_batched(
            || Tape::new(model.store()),
            |mut t| {
                let l = model.losses(&mut t, &batch).unwrap();
                let j = joint_loss(&mut t, l.gen, l.eol, 1.0, 1.0).unwrap();
                black_box(t.backward(j).unwrap())
            },
            BatchSize::LargeInput,
        )
    });
    group.bench_function("greedy/batch32", |b| {
        b.iter(|| black_box(model.generate(&refs, GenerateOptions::default()).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, labels, metrics, model);
criterion_main!(benches);
