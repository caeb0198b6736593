use std::collections::HashMap;
use std::fmt;

use super::{align, lcs_pairs, EditLabel, EditOp, EditScript};
use crate::corpus::{linearize, Linearized, Sample};

/// Labels for one sample plus what could not be grounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub labels: Vec<EditLabel>,
    pub script: EditScript,
    /// New-token runs with no occurrence in the history.
    pub unmatched: Vec<Vec<String>>,
}

impl Derivation {
    pub fn is_extractive(&self) -> bool {
        self.unmatched.is_empty()
    }
}

struct Grounder<'a> {
    history: Vec<Vec<&'a str>>,
    lin: &'a Linearized,
    labels: Vec<EditLabel>,
    unmatched: Vec<Vec<String>>,
}

impl Grounder<'_> {
    /// Longest sub-run of `piece` occurring in `utt`, leftmost in `utt` first.
    /// Returns `(piece_start, len, utt_start)`.
    fn longest_span(piece: &[String], utt: &[&str]) -> Option<(usize, usize, usize)> {
        for len in (1..=piece.len().min(utt.len())).rev() {
            for hs in 0..=utt.len() - len {
                for ps in 0..=piece.len() - len {
                    if piece[ps..ps + len].iter().zip(&utt[hs..hs + len]).all(|(a, b)| a == b) {
                        return Some((ps, len, hs));
                    }
                }
            }
        }
        None
    }

    /// Grounds `piece` in the history: most recent utterance first, then the
    /// longest matching run, then leftmost. Whatever is left on either side of
    /// a match is grounded recursively; runs that match nowhere are recorded
    /// as unmatched. Positions already labeled keep their label.
    fn ground(&mut self, piece: &[String], label: EditLabel) {
        if piece.is_empty() {
            return;
        }
        for h in (0..self.history.len()).rev() {
            if let Some((ps, len, hs)) = Self::longest_span(piece, &self.history[h]) {
                for k in 0..len {
                    let pos = self.lin.position(h, hs + k);
                    if self.labels[pos] == EditLabel::Na {
                        self.labels[pos] = label;
                    }
                }
                self.ground(&piece[..ps], label);
                self.ground(&piece[ps + len..], label);
                return;
            }
        }
        self.unmatched.push(piece.to_vec());
    }
}

pub fn derive_labels(sample: &Sample) -> Derivation {
    let lin = linearize(&sample.dialogue);
    let script = align(&sample.dialogue.incomplete.words(), &sample.rewritten.words());
    let inc = lin.incomplete_index();
    let mut g = Grounder {
        history: sample.dialogue.history.iter().map(|u| u.words()).collect(),
        lin: &lin,
        labels: vec![EditLabel::Na; lin.len()],
        unmatched: Vec::new(),
    };
    for op in &script.ops {
        match op {
            EditOp::Replace { source, tokens, .. } => {
                for t in source.clone() {
                    g.labels[lin.position(inc, t)] = EditLabel::Rp;
                }
                g.ground(tokens, EditLabel::Nw);
            }
            EditOp::Insert { tokens, .. } => g.ground(tokens, EditLabel::In),
        }
    }
    Derivation {
        labels: g.labels,
        script,
        unmatched: g.unmatched,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingLabels,
    Length { expected: usize, found: usize },
    MarkerLabeled { position: usize, label: EditLabel },
    /// `RP` outside the incomplete utterance.
    ReplaceInHistory { position: usize },
    /// `NW`/`IN` inside the incomplete utterance.
    SourceInIncomplete { position: usize, label: EditLabel },
    /// `RP` on a token the alignment keeps.
    ReplacedTokenKept { position: usize },
    /// Incomplete token the alignment drops but which is not `RP`.
    DroppedTokenNotReplaced { position: usize, label: EditLabel },
    /// `NW`/`IN` token with no unaligned counterpart in the rewrite.
    SourceNotInRewrite { position: usize, token: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingLabels => write!(f, "sample has no labels"),
            Violation::Length { expected, found } => {
                write!(f, "label length {found}, stream length {expected}")
            }
            Violation::MarkerLabeled { position, label } => {
                write!(f, "speaker marker at {position} labeled {label}")
            }
            Violation::ReplaceInHistory { position } => write!(f, "RP in history at {position}"),
            Violation::SourceInIncomplete { position, label } => {
                write!(f, "{label} in incomplete utterance at {position}")
            }
            Violation::ReplacedTokenKept { position } => {
                write!(f, "RP at {position} but the token survives in the rewrite")
            }
            Violation::DroppedTokenNotReplaced { position, label } => {
                write!(f, "token at {position} is removed by the rewrite but labeled {label}")
            }
            Violation::SourceNotInRewrite { position, token } => {
                write!(f, "`{token}` at {position} is not among the rewrite's new tokens")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_consistency(sample: &Sample) -> ConsistencyReport {
    let mut violations = Vec::new();
    let Some(labels) = &sample.labels else {
        violations.push(Violation::MissingLabels);
        return ConsistencyReport { violations };
    };
    let lin = linearize(&sample.dialogue);
    if labels.len() != lin.len() {
        violations.push(Violation::Length {
            expected: lin.len(),
            found: labels.len(),
        });
        return ConsistencyReport { violations };
    }
    let inc = lin.incomplete_index();
    for (p, (&label, prov)) in labels.iter().zip(&lin.provenance).enumerate() {
        if prov.is_speaker_marker {
            if label != EditLabel::Na {
                violations.push(Violation::MarkerLabeled { position: p, label });
            }
            continue;
        }
        let in_incomplete = prov.utterance == inc;
        match label {
            EditLabel::Rp if !in_incomplete => violations.push(Violation::ReplaceInHistory { position: p }),
            EditLabel::Nw | EditLabel::In if in_incomplete => {
                violations.push(Violation::SourceInIncomplete { position: p, label })
            }
            _ => {}
        }
    }

    let inc_words = sample.dialogue.incomplete.words();
    let rew_words = sample.rewritten.words();
    let pairs = lcs_pairs(&inc_words, &rew_words);
    let mut kept = vec![false; inc_words.len()];
    let mut rew_covered = vec![false; rew_words.len()];
    for &(i, j) in &pairs {
        kept[i] = true;
        if labels[lin.position(inc, i)] == EditLabel::Na {
            rew_covered[j] = true;
        }
    }
    for (i, &k) in kept.iter().enumerate() {
        let p = lin.position(inc, i);
        match (k, labels[p]) {
            (true, EditLabel::Rp) => violations.push(Violation::ReplacedTokenKept { position: p }),
            (false, l) if l != EditLabel::Rp => {
                violations.push(Violation::DroppedTokenNotReplaced { position: p, label: l })
            }
            _ => {}
        }
    }

    let mut available: HashMap<&str, usize> = HashMap::new();
    for (j, w) in rew_words.iter().enumerate() {
        if !rew_covered[j] {
            *available.entry(w).or_default() += 1;
        }
    }
    for (p, &label) in labels.iter().enumerate() {
        if matches!(label, EditLabel::Nw | EditLabel::In) {
            let token = lin.tokens[p].as_str();
            match available.get_mut(token) {
                Some(c) if *c > 0 => *c -= 1,
                _ => violations.push(Violation::SourceNotInRewrite {
                    position: p,
                    token: token.to_string(),
                }),
            }
        }
    }
    ConsistencyReport { violations }
}
