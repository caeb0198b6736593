//! Rewrite quality metrics.
//!
//! Conventions where the usual definitions leave room:
//!
//! * BLEU is corpus-level. A zero match count at order 2 or higher is
//!   smoothed to `(0 + 1) / (total + 1)`; a zero unigram precision makes the
//!   score 0.
//! * ROUGE scores are per-sample F1 values averaged over the corpus. A pair
//!   where neither side has an n-gram scores 1 if the two sequences are
//!   equal and 0 otherwise.
//! * Restoration scores count n-grams inside the runs of a rewrite that the
//!   LCS alignment against the incomplete utterance leaves unmatched, and
//!   sum the counts over the corpus before dividing. With nothing restored
//!   on either side the triple is (1, 1, 1); with nothing restored by the
//!   candidate precision is 0.
//! * Exact match compares token sequences, case-sensitively.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::lcs_pairs;

type Tokens = [String];

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_default() += 1;
        }
    }
    out
}

/// Clipped overlap of two n-gram multisets.
fn overlap(a: &HashMap<&[String], usize>, b: &HashMap<&[String], usize>) -> usize {
    a.iter().map(|(g, &c)| c.min(b.get(g).copied().unwrap_or(0))).sum()
}

fn check_lengths(c: usize, r: usize) -> Result<()> {
    if c != r {
        return Err(Error::Invalid(format!("{c} candidates for {r} references")));
    }
    Ok(())
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Corpus BLEU with orders `1..=n` weighted uniformly.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<String>], n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::Invalid("BLEU order must be at least 1".into()));
    }
    check_lengths(candidates.len(), references.len())?;
    let c_len: usize = candidates.iter().map(Vec::len).sum();
    let r_len: usize = references.iter().map(Vec::len).sum();
    if c_len == 0 {
        return Ok(if r_len == 0 { 1.0 } else { 0.0 });
    }
    let mut log_sum = 0.0;
    for m in 1..=n {
        let (mut matched, mut total) = (0usize, 0usize);
        for (c, r) in candidates.iter().zip(references) {
            let cg = ngrams(c, m);
            matched += overlap(&cg, &ngrams(r, m));
            total += c.len().saturating_sub(m - 1);
        }
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if m == 1 {
            return Ok(0.0);
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let bp = if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    Ok(bp * (log_sum / n as f64).exp())
}

fn rouge_n_pair(c: &Tokens, r: &Tokens, n: usize) -> f64 {
    let (cg, rg) = (ngrams(c, n), ngrams(r, n));
    let (ct, rt): (usize, usize) = (cg.values().sum(), rg.values().sum());
    if ct == 0 && rt == 0 {
        return if c == r { 1.0 } else { 0.0 };
    }
    if ct == 0 || rt == 0 {
        return 0.0;
    }
    let o = overlap(&cg, &rg) as f64;
    f1(o / ct as f64, o / rt as f64)
}

fn rouge_l_pair(c: &Tokens, r: &Tokens) -> f64 {
    if c.is_empty() && r.is_empty() {
        return 1.0;
    }
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let l = lcs_pairs(c, r).len() as f64;
    f1(l / c.len() as f64, l / r.len() as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn rouge_n(candidates: &[Vec<String>], references: &[Vec<String>], n: usize) -> Result<f64> {
    check_lengths(candidates.len(), references.len())?;
    if n < 1 {
        return Err(Error::Invalid("ROUGE order must be at least 1".into()));
    }
    Ok(mean(candidates.iter().zip(references).map(|(c, r)| rouge_n_pair(c, r, n))))
}

pub fn rouge_l(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    check_lengths(candidates.len(), references.len())?;
    Ok(mean(candidates.iter().zip(references).map(|(c, r)| rouge_l_pair(c, r))))
}

/// Maximal runs of `utterance` left unmatched by the LCS alignment with
/// `incomplete`.
pub fn restored_runs(utterance: &[String], incomplete: &[String]) -> Vec<Vec<String>> {
    let mut matched = vec![false; utterance.len()];
    for (_, j) in lcs_pairs(incomplete, utterance) {
        matched[j] = true;
    }
    let mut runs = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    for (tok, m) in utterance.iter().zip(matched) {
        if m {
            if !cur.is_empty() {
                runs.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(tok.clone());
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    runs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f: f64,
}

/// Micro-averaged n-gram precision/recall/F of restored content.
pub fn restoration(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    incompletes: &[Vec<String>],
    n: usize,
) -> Result<Prf> {
    check_lengths(candidates.len(), references.len())?;
    check_lengths(incompletes.len(), references.len())?;
    if n < 1 {
        return Err(Error::Invalid("restoration order must be at least 1".into()));
    }
    let (mut hit, mut c_total, mut r_total) = (0usize, 0usize, 0usize);
    for ((c, r), inc) in candidates.iter().zip(references).zip(incompletes) {
        let c_runs = restored_runs(c, inc);
        let r_runs = restored_runs(r, inc);
        let mut cg: HashMap<&[String], usize> = HashMap::new();
        for run in &c_runs {
            for (g, k) in ngrams(run, n) {
                *cg.entry(g).or_default() += k;
            }
        }
        let mut rg: HashMap<&[String], usize> = HashMap::new();
        for run in &r_runs {
            for (g, k) in ngrams(run, n) {
                *rg.entry(g).or_default() += k;
            }
        }
        hit += overlap(&cg, &rg);
        c_total += cg.values().sum::<usize>();
        r_total += rg.values().sum::<usize>();
    }
    if c_total == 0 && r_total == 0 {
        return Ok(Prf { p: 1.0, r: 1.0, f: 1.0 });
    }
    let p = if c_total == 0 { 0.0 } else { hit as f64 / c_total as f64 };
    let r = if r_total == 0 { 0.0 } else { hit as f64 / r_total as f64 };
    Ok(Prf { p, r, f: f1(p, r) })
}

pub fn exact_match(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    check_lengths(candidates.len(), references.len())?;
    Ok(mean(candidates.iter().zip(references).map(|(c, r)| f64::from(u8::from(c == r)))))
}

/// Share of candidates holding at least one token that never occurs in
/// their reference.
pub fn redundant_rate(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    check_lengths(candidates.len(), references.len())?;
    Ok(mean(candidates.iter().zip(references).map(|(c, r)| {
        let known: HashSet<&String> = r.iter().collect();
        f64::from(u8::from(c.iter().any(|t| !known.contains(t))))
    })))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Keys `"1"`, `"2"`, `"4"`.
    pub bleu: BTreeMap<String, f64>,
    /// Keys `"1"`, `"2"`, `"L"`.
    pub rouge: BTreeMap<String, f64>,
    /// Keys `"1"`, `"2"`, `"3"`.
    pub restoration: BTreeMap<String, Prf>,
    pub em: f64,
    pub redundant_rate: f64,
    pub count: usize,
}

impl MetricReport {
    pub fn compute(
        candidates: &[Vec<String>],
        references: &[Vec<String>],
        incompletes: &[Vec<String>],
    ) -> Result<MetricReport> {
        let mut b = BTreeMap::new();
        for n in [1, 2, 4] {
            b.insert(n.to_string(), bleu(candidates, references, n)?);
        }
        let mut r = BTreeMap::new();
        r.insert("1".into(), rouge_n(candidates, references, 1)?);
        r.insert("2".into(), rouge_n(candidates, references, 2)?);
        r.insert("L".into(), rouge_l(candidates, references)?);
        let mut rest = BTreeMap::new();
        for n in [1, 2, 3] {
            rest.insert(n.to_string(), restoration(candidates, references, incompletes, n)?);
        }
        Ok(MetricReport {
            bleu: b,
            rouge: r,
            restoration: rest,
            em: exact_match(candidates, references)?,
            redundant_rate: redundant_rate(candidates, references)?,
            count: candidates.len(),
        })
    }

    /// Aligned two-column plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, f64)> = Vec::new();
        for (k, v) in &self.bleu {
            rows.push((format!("BLEU-{k}"), *v));
        }
        for (k, v) in &self.rouge {
            rows.push((format!("ROUGE-{k}"), *v));
        }
        for (k, v) in &self.restoration {
            rows.push((format!("P{k}"), v.p));
            rows.push((format!("R{k}"), v.r));
            rows.push((format!("F{k}"), v.f));
        }
        rows.push(("EM".into(), self.em));
        rows.push(("redundant rate".into(), self.redundant_rate));
        let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (name, v) in rows {
            let _ = writeln!(out, "{name:<w$}  {v:>7.4}");
        }
        let _ = writeln!(out, "{:<w$}  {:>7}", "samples", self.count);
        out
    }
}
