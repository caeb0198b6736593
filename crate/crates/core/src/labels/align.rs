use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditOp {
    /// Tokens `source` of the incomplete utterance become `tokens`
    /// (`target` in the rewrite). An empty `tokens` is a pure deletion.
    Replace {
        source: Range<usize>,
        target: Range<usize>,
        tokens: Vec<String>,
    },
    /// `tokens` go into the gap before incomplete-utterance token `anchor`
    /// (`anchor == len` appends).
    Insert {
        anchor: usize,
        target: Range<usize>,
        tokens: Vec<String>,
    },
}

impl EditOp {
    pub fn tokens(&self) -> &[String] {
        match self {
            EditOp::Replace { tokens, .. } | EditOp::Insert { tokens, .. } => tokens,
        }
    }

    /// Position in the incomplete utterance where the op starts.
    fn start(&self) -> usize {
        match self {
            EditOp::Replace { source, .. } => source.start,
            EditOp::Insert { anchor, .. } => *anchor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Matched `(incomplete, rewritten)` index pairs of a longest common
/// subsequence, increasing in both coordinates.
///
/// Ties are broken toward the leftmost match in the first sequence: the
/// traceback matches whenever the current tokens are equal and otherwise
/// skips a token of the second sequence whenever doing so keeps the LCS
/// length.
pub fn lcs_pairs<A: AsRef<str>, B: AsRef<str>>(a: &[A], b: &[B]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    // suffix table: len[i][j] = LCS(a[i..], b[j..])
    let mut len = vec![0u32; (n + 1) * (m + 1)];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            len[i * w + j] = if a[i].as_ref() == b[j].as_ref() {
                len[(i + 1) * w + j + 1] + 1
            } else {
                len[(i + 1) * w + j].max(len[i * w + j + 1])
            };
        }
    }
    let mut pairs = Vec::with_capacity(len[0] as usize);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i].as_ref() == b[j].as_ref() {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if len[i * w + j + 1] == len[i * w + j] {
            j += 1;
        } else {
            i += 1;
        }
    }
    pairs
}

/// Minimal token edit script turning `incomplete` into `rewritten`.
///
/// Between consecutive LCS matches, unmatched incomplete tokens and unmatched
/// rewrite tokens form one hunk: both present gives a `Replace`, only rewrite
/// tokens an `Insert`, only incomplete tokens a `Replace` with no new tokens.
pub fn align<A: AsRef<str>, B: AsRef<str>>(incomplete: &[A], rewritten: &[B]) -> EditScript {
    let pairs = lcs_pairs(incomplete, rewritten);
    let mut ops = Vec::new();
    let (mut i, mut j) = (0, 0);
    let sentinel = (incomplete.len(), rewritten.len());
    for (mi, mj) in pairs.into_iter().chain(std::iter::once(sentinel)) {
        if i < mi || j < mj {
            let tokens: Vec<String> = rewritten[j..mj].iter().map(|t| t.as_ref().to_string()).collect();
            if i < mi {
                ops.push(EditOp::Replace {
                    source: i..mi,
                    target: j..mj,
                    tokens,
                });
            } else {
                ops.push(EditOp::Insert {
                    anchor: i,
                    target: j..mj,
                    tokens,
                });
            }
        }
        i = mi + 1;
        j = mj + 1;
    }
    EditScript { ops }
}

/// Applies `script` to `incomplete`. Ops must be ordered and non-overlapping.
pub fn apply_script<A: AsRef<str>>(incomplete: &[A], script: &EditScript) -> Result<Vec<String>> {
    let n = incomplete.len();
    let mut out = Vec::with_capacity(n);
    let mut cursor = 0;
    for op in &script.ops {
        let start = op.start();
        if start < cursor || start > n {
            return Err(Error::Script(format!(
                "op at {start} overlaps or exceeds utterance of length {n} (cursor {cursor})"
            )));
        }
        out.extend(incomplete[cursor..start].iter().map(|t| t.as_ref().to_string()));
        match op {
            EditOp::Replace { source, tokens, .. } => {
                if source.end > n || source.end < source.start {
                    return Err(Error::Script(format!(
                        "replace span {source:?} out of range for length {n}"
                    )));
                }
                out.extend(tokens.iter().cloned());
                cursor = source.end;
            }
            EditOp::Insert { tokens, .. } => {
                out.extend(tokens.iter().cloned());
                cursor = start;
            }
        }
    }
    out.extend(incomplete[cursor..].iter().map(|t| t.as_ref().to_string()));
    Ok(out)
}
