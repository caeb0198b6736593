//! Per-sample encoding and padded batches.

use super::config::LabelMode;
use super::layers::MASKED;
use crate::autodiff::Tensor;
use crate::corpus::{linearize, prepare_sample, PosLexicon, Sample, Vocab};
use crate::error::{Error, Result};
use crate::graph::{build_graph, DialogueGraph, RelationType};
use crate::labels::{derive_labels, EditLabel};

/// A sample turned into ids, graph and labels.
#[derive(Debug, Clone)]
pub struct EncodedSample {
    /// Linearized stream ids (markers included).
    pub src: Vec<usize>,
    pub graph: DialogueGraph,
    pub labels: Vec<EditLabel>,
    /// Rewrite ids, without `<s>`/`</s>`.
    pub target: Vec<usize>,
    pub reference: Vec<String>,
    pub incomplete: Vec<String>,
}

/// Tags and parses what is missing, builds the graph, and derives labels
/// when the sample carries none.
pub fn encode_sample(sample: &Sample, vocab: &Vocab, lexicon: &PosLexicon) -> Result<EncodedSample> {
    let mut s = sample.clone();
    prepare_sample(&mut s, lexicon);
    let graph = build_graph(&s.dialogue)?;
    let lin = linearize(&s.dialogue);
    let labels = match &s.labels {
        Some(l) if l.len() == lin.len() => l.clone(),
        Some(l) => {
            return Err(Error::Invalid(format!(
                "{} labels for a stream of {} tokens",
                l.len(),
                lin.len()
            )))
        }
        None => derive_labels(&s).labels,
    };
    let reference: Vec<String> = s.rewritten.words().iter().map(|w| w.to_string()).collect();
    Ok(EncodedSample {
        src: vocab.encode(&lin.tokens),
        graph,
        labels,
        target: vocab.encode(&reference),
        reference,
        incomplete: s.dialogue.incomplete.words().iter().map(|w| w.to_string()).collect(),
    })
}

/// Samples padded to the longest source and target of the batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    pub src_len: usize,
    /// Decoder length: longest target plus one.
    pub tgt_len: usize,
    /// `[B * K]`, padded with `PAD`.
    pub src_ids: Vec<usize>,
    pub src_lens: Vec<usize>,
    /// `[B, 1, 1, K]` additive key mask.
    pub key_mask: Tensor,
    /// One `[B, K, K]` matrix per relation.
    pub adjacency: Vec<Tensor>,
    /// `[B * K]` gold label classes; `None` on padding.
    pub labels: Vec<Option<usize>>,
    /// `[B * T]`: `<s>` followed by the target, padded.
    pub dec_in: Vec<usize>,
    /// `[B * T]`: the target followed by `</s>`; `None` on padding.
    pub targets: Vec<Option<usize>>,
}

impl Batch {
    pub fn new(items: &[&EncodedSample], mode: LabelMode) -> Batch {
        let size = items.len();
        let k = items.iter().map(|e| e.src.len()).max().unwrap_or(0);
        let tl = items.iter().map(|e| e.target.len() + 1).max().unwrap_or(1);
        let mut src_ids = vec![Vocab::PAD; size * k];
        let mut mask = vec![MASKED; size * k];
        let mut labels = vec![None; size * k];
        let mut adjacency = vec![vec![0.0; size * k * k]; RelationType::ALL.len()];
        let mut dec_in = vec![Vocab::PAD; size * tl];
        let mut targets = vec![None; size * tl];
        for (b, e) in items.iter().enumerate() {
            let n = e.src.len();
            src_ids[b * k..b * k + n].copy_from_slice(&e.src);
            mask[b * k..b * k + n].fill(0.0);
            for (j, l) in e.labels.iter().enumerate() {
                labels[b * k + j] = Some(match mode {
                    LabelMode::Merged => usize::from(l.is_edit()),
                    _ => l.index(),
                });
            }
            for rel in RelationType::ALL {
                let a = &mut adjacency[rel.index()];
                for &(i, v) in e.graph.edges(rel) {
                    a[b * k * k + i * k + v] = 1.0;
                }
            }
            dec_in[b * tl] = Vocab::BOS;
            for (j, &id) in e.target.iter().enumerate() {
                dec_in[b * tl + j + 1] = id;
                targets[b * tl + j] = Some(id);
            }
            targets[b * tl + e.target.len()] = Some(Vocab::EOS);
        }
        Batch {
            size,
            src_len: k,
            tgt_len: tl,
            src_ids,
            src_lens: items.iter().map(|e| e.src.len()).collect(),
            key_mask: Tensor::new(vec![size, 1, 1, k], mask).expect("sized"),
            adjacency: adjacency
                .into_iter()
                .map(|a| Tensor::new(vec![size, k, k], a).expect("sized"))
                .collect(),
            labels,
            dec_in,
            targets,
        }
    }
}
