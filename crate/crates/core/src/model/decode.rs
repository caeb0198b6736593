use std::cmp::Ordering;

use super::batch::Batch;
use super::network::RewriteModel;
use crate::autodiff::{Tape, Tensor};
use crate::corpus::Vocab;
use crate::error::Result;

#[derive(Debug, Clone)]
struct Hyp {
    tokens: Vec<usize>,
    logp: f64,
}

#[derive(Debug, Default)]
struct SampleBeams {
    live: Vec<Hyp>,
    /// `(hypothesis, length-normalized score)`.
    done: Vec<(Hyp, f64)>,
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

fn gather(src: &Tensor, rows: &[usize], shape_tail: &[usize]) -> Tensor {
    let w: usize = shape_tail.iter().product();
    let mut data = Vec::with_capacity(rows.len() * w);
    for &r in rows {
        data.extend_from_slice(&src.data()[r * w..(r + 1) * w]);
    }
    let mut shape = vec![rows.len()];
    shape.extend_from_slice(shape_tail);
    Tensor::new(shape, data).expect("sized")
}

/// Beam search with `k` beams per sample over the cached source state;
/// `k = 1` is greedy decoding. Candidates are ranked by cumulative
/// log-probability (ties: earlier beam, then lower token id); finished
/// hypotheses by log-probability divided by length including `</s>`. The
/// last of `max_len` steps may only emit `</s>`.
pub(crate) fn beam_search(
    model: &RewriteModel,
    batch: &Batch,
    memory: &Tensor,
    lambda: &Tensor,
    k: usize,
    max_len: usize,
) -> Result<Vec<Vec<usize>>> {
    let (b, kk, d) = (batch.size, batch.src_len, model.config().d_model);
    let mut beams: Vec<SampleBeams> = (0..b)
        .map(|_| SampleBeams {
            live: vec![Hyp {
                tokens: Vec::new(),
                logp: 0.0,
            }],
            done: Vec::new(),
        })
        .collect();

    for step in 0..max_len {
        let owners: Vec<(usize, usize)> = beams
            .iter()
            .enumerate()
            .flat_map(|(s, sb)| (0..sb.live.len()).map(move |h| (s, h)))
            .collect();
        if owners.is_empty() {
            break;
        }
        let rows: Vec<usize> = owners.iter().map(|o| o.0).collect();
        let n = rows.len();
        let len = step + 1;
        let mut dec_in = Vec::with_capacity(n * len);
        for &(s, h) in &owners {
            dec_in.push(Vocab::BOS);
            dec_in.extend_from_slice(&beams[s].live[h].tokens);
        }
        let logits = {
            let mut t = Tape::new(model.store());
            let mem = t.constant(gather(memory, &rows, &[kk, d]));
            let lam = t.constant(gather(lambda, &rows, &[kk]));
            let mask = t.constant(gather(&batch.key_mask, &rows, &[1, 1, kk]));
            let out = model.decode_logits(&mut t, mem, lam, mask, &dec_in, n, len)?;
            t.value(out).clone()
        };
        let v = logits.shape()[2];
        let last = step + 1 == max_len;

        let mut next: Vec<Vec<(f64, usize, usize)>> = vec![Vec::new(); b];
        for (row, &(s, h)) in owners.iter().enumerate() {
            let base = (row * len + len - 1) * v;
            let lp = log_softmax(&logits.data()[base..base + v]);
            let cum = beams[s].live[h].logp;
            for (tok, &l) in lp.iter().enumerate() {
                let allowed = if last { tok == Vocab::EOS } else { tok != Vocab::PAD && tok != Vocab::BOS };
                if allowed {
                    next[s].push((cum + l, h, tok));
                }
            }
        }
        for (s, mut cands) in next.into_iter().enumerate() {
            if cands.is_empty() {
                continue;
            }
            cands.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(Ordering::Equal)
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let sb = &mut beams[s];
            let mut live = Vec::new();
            for &(score, h, tok) in cands.iter().take(k) {
                let mut tokens = sb.live[h].tokens.clone();
                if tok == Vocab::EOS {
                    let norm = score / (tokens.len() + 1) as f64;
                    sb.done.push((Hyp { tokens, logp: score }, norm));
                } else {
                    tokens.push(tok);
                    live.push(Hyp { tokens, logp: score });
                }
            }
            sb.live = if sb.done.len() >= k { Vec::new() } else { live };
        }
    }

    Ok(beams
        .into_iter()
        .map(|sb| {
            let mut best: Option<(Hyp, f64)> = None;
            for (h, score) in sb.done {
                if best.as_ref().is_none_or(|b| score > b.1) {
                    best = Some((h, score));
                }
            }
            best.map(|b| b.0.tokens).unwrap_or_default()
        })
        .collect())
}
