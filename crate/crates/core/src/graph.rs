//! Token-level heterogeneous dialogue graph.
//!
//! Nodes are the positions of the linearized stream (tokens and speaker
//! markers). Edges come in four typed relations plus self-loops; every
//! relation is stored symmetrized.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{linearize, Dialogue, Pos};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationType {
    /// Head/dependent pairs of each utterance's parse.
    IntraUtterance,
    /// Roots of consecutive utterances.
    InterUtterance,
    /// Speaker marker to the root of its utterance.
    SpeakerUtterance,
    /// Incomplete-utterance pronouns to pronouns and nouns elsewhere.
    PseudoCoreference,
    SelfLoop,
}

impl RelationType {
    pub const ALL: [RelationType; 5] = [
        RelationType::IntraUtterance,
        RelationType::InterUtterance,
        RelationType::SpeakerUtterance,
        RelationType::PseudoCoreference,
        RelationType::SelfLoop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::IntraUtterance => "intra_utterance",
            RelationType::InterUtterance => "inter_utterance",
            RelationType::SpeakerUtterance => "speaker_utterance",
            RelationType::PseudoCoreference => "pseudo_coreference",
            RelationType::SelfLoop => "self_loop",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueGraph {
    num_nodes: usize,
    /// Sorted, deduplicated `(src, dst)` pairs per relation.
    edges: [Vec<(usize, usize)>; 5],
}

impl DialogueGraph {
    pub fn from_edges(num_nodes: usize, edges: [Vec<(usize, usize)>; 5]) -> Self {
        DialogueGraph { num_nodes, edges }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self, rel: RelationType) -> &[(usize, usize)] {
        &self.edges[rel.index()]
    }

    pub fn edges_mut(&mut self, rel: RelationType) -> &mut Vec<(usize, usize)> {
        &mut self.edges[rel.index()]
    }

    /// Nodes `v` with an `rel` edge `(i, v)`.
    pub fn neighbors(&self, rel: RelationType, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges(rel).iter().filter(move |e| e.0 == i).map(|e| e.1)
    }

    /// Dense row-major `n x n` adjacency of one relation, `n >= num_nodes`
    /// (extra rows/columns stay zero, for padded batches).
    pub fn dense_adjacency(&self, rel: RelationType, n: usize) -> Vec<f64> {
        assert!(n >= self.num_nodes);
        let mut a = vec![0.0; n * n];
        for &(i, v) in self.edges(rel) {
            a[i * n + v] = 1.0;
        }
        a
    }

    /// `{relation: [[src, dst], ...]}` for inspection.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("num_nodes".into(), self.num_nodes.into());
        for rel in RelationType::ALL {
            let pairs: Vec<serde_json::Value> = self
                .edges(rel)
                .iter()
                .map(|&(a, b)| serde_json::json!([a, b]))
                .collect();
            map.insert(rel.name().into(), pairs.into());
        }
        serde_json::Value::Object(map)
    }

    /// Graph with the same nodes relabeled by `perm` (new index of old node
    /// `i` is `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> DialogueGraph {
        let mut edges: [Vec<(usize, usize)>; 5] = Default::default();
        for rel in RelationType::ALL {
            let mut e: Vec<_> = self.edges(rel).iter().map(|&(a, b)| (perm[a], perm[b])).collect();
            e.sort_unstable();
            edges[rel.index()] = e;
        }
        DialogueGraph {
            num_nodes: self.num_nodes,
            edges,
        }
    }
}

fn symmetrize(mut pairs: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let rev: Vec<_> = pairs.iter().map(|&(a, b)| (b, a)).collect();
    pairs.extend(rev);
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Builds the graph of a dialogue whose utterances all carry a parse and
/// POS tags (see [`crate::corpus::prepare_sample`]).
pub fn build_graph(dialogue: &Dialogue) -> Result<DialogueGraph> {
    let lin = linearize(dialogue);
    let utts: Vec<_> = dialogue.utterances().collect();
    let mut roots = Vec::with_capacity(utts.len());
    let mut intra = Vec::new();
    for (u, utt) in utts.iter().enumerate() {
        let tree = utt.parse.as_ref().ok_or_else(|| {
            Error::Invalid(format!("utterance {u} has no parse; attach or generate one first"))
        })?;
        if tree.heads.len() != utt.tokens.len() {
            return Err(Error::Invalid(format!(
                "utterance {u}: parse covers {} of {} tokens",
                tree.heads.len(),
                utt.tokens.len()
            )));
        }
        for (child, head) in tree.heads.iter().enumerate() {
            if let Some(h) = head {
                intra.push((lin.position(u, child), lin.position(u, *h)));
            }
        }
        // an empty utterance has no root; its marker stands in
        roots.push(tree.root().map(|r| lin.position(u, r)).unwrap_or(lin.marker_positions[u]));
    }

    let inter = roots.windows(2).map(|w| (w[0], w[1])).collect();
    let speaker = roots
        .iter()
        .zip(&lin.marker_positions)
        .filter(|(r, m)| r != m)
        .map(|(&r, &m)| (m, r))
        .collect();

    let inc = lin.incomplete_index();
    let mut coref = Vec::new();
    for (i, tok) in utts[inc].tokens.iter().enumerate() {
        if tok.pos != Some(Pos::Pron) {
            continue;
        }
        let p = lin.position(inc, i);
        for (u, utt) in utts.iter().enumerate().filter(|(u, _)| *u != inc) {
            for (j, other) in utt.tokens.iter().enumerate() {
                if matches!(other.pos, Some(Pos::Pron) | Some(Pos::Noun)) {
                    coref.push((p, lin.position(u, j)));
                }
            }
        }
    }

    let n = lin.len();
    Ok(DialogueGraph {
        num_nodes: n,
        edges: [
            symmetrize(intra),
            symmetrize(inter),
            symmetrize(speaker),
            symmetrize(coref),
            (0..n).map(|i| (i, i)).collect(),
        ],
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GraphReport {
    pub violations: Vec<String>,
    pub counts: BTreeMap<String, usize>,
}

impl GraphReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_graph(graph: &DialogueGraph, k: usize) -> GraphReport {
    let mut report = GraphReport::default();
    if graph.num_nodes != k {
        report
            .violations
            .push(format!("graph has {} nodes, stream has {k}", graph.num_nodes));
    }
    for rel in RelationType::ALL {
        let edges = graph.edges(rel);
        report.counts.insert(rel.name().to_string(), edges.len());
        for &(a, b) in edges {
            if a >= k || b >= k {
                report.violations.push(format!("{rel}: edge ({a}, {b}) out of range"));
            } else if !edges.contains(&(b, a)) {
                report.violations.push(format!("{rel}: edge ({a}, {b}) has no reverse"));
            }
        }
        if rel == RelationType::SelfLoop {
            let expected: Vec<_> = (0..k).map(|i| (i, i)).collect();
            if edges != expected.as_slice() {
                report.violations.push("self_loop is not exactly {(i, i)}".to_string());
            }
        } else if let Some(&(a, _)) = edges.iter().find(|(a, b)| a == b) {
            report.violations.push(format!("{rel}: self edge at {a}"));
        }
    }
    report
}
