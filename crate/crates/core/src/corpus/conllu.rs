use std::path::Path;

use super::{DependencyTree, Pos, Sample};
use crate::error::{Error, Result};

/// One sentence block: the columns this crate reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluSentence {
    pub forms: Vec<String>,
    pub upos: Vec<String>,
    /// 0 means root, otherwise a 1-based token id.
    pub heads: Vec<usize>,
}

/// Parses CoNLL-U text. Comment lines, multi-word token ranges (`3-4`) and
/// empty nodes (`5.1`) are skipped.
pub fn read_conllu(text: &str) -> Result<Vec<ConlluSentence>> {
    let mut out = Vec::new();
    let mut cur = ConlluSentence {
        forms: vec![],
        upos: vec![],
        heads: vec![],
    };
    let flush = |cur: &mut ConlluSentence, out: &mut Vec<ConlluSentence>| {
        if !cur.forms.is_empty() {
            out.push(std::mem::replace(
                cur,
                ConlluSentence {
                    forms: vec![],
                    upos: vec![],
                    heads: vec![],
                },
            ));
        }
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut cur, &mut out);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 7 {
            return Err(Error::Parse(format!(
                "line {}: expected at least 7 tab-separated columns, found {}",
                lineno + 1,
                cols.len()
            )));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad token id `{}`", lineno + 1, cols[0])))?;
        if id != cur.forms.len() + 1 {
            return Err(Error::Parse(format!(
                "line {}: token id {id} out of sequence",
                lineno + 1
            )));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad head `{}`", lineno + 1, cols[6])))?;
        cur.forms.push(cols[1].to_string());
        cur.upos.push(cols[3].to_string());
        cur.heads.push(head);
    }
    flush(&mut cur, &mut out);
    Ok(out)
}

/// Attaches parses and coarse POS tags, one sentence block per dialogue
/// utterance in corpus order (history turns, then the incomplete turn).
pub fn attach_parses(samples: &mut [Sample], conllu_path: impl AsRef<Path>) -> Result<()> {
    let path = conllu_path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sentences = read_conllu(&text)?;
    attach_sentences(samples, &sentences)
}

/// Attaches already-read sentence blocks, one per utterance in corpus order.
pub fn attach_sentences(samples: &mut [Sample], sentences: &[ConlluSentence]) -> Result<()> {
    let total: usize = samples.iter().map(|s| s.dialogue.num_utterances()).sum();
    if total != sentences.len() {
        return Err(Error::Parse(format!(
            "{} sentence blocks for {total} utterances",
            sentences.len()
        )));
    }
    let mut blocks = sentences.iter();
    for (si, sample) in samples.iter_mut().enumerate() {
        for (ui, utt) in sample.dialogue.utterances_mut().enumerate() {
            let block = blocks.next().expect("count checked above");
            let mismatch = |message: String| Error::Mismatch {
                sample: si,
                utterance: ui,
                message,
            };
            if block.forms.len() != utt.tokens.len() {
                return Err(mismatch(format!(
                    "utterance has {} tokens, parse block has {}",
                    utt.tokens.len(),
                    block.forms.len()
                )));
            }
            for (t, form) in utt.tokens.iter().zip(&block.forms) {
                if &t.text != form {
                    return Err(mismatch(format!(
                        "token {} is `{}` but parse has `{form}`",
                        t.index, t.text
                    )));
                }
            }
            let tree = DependencyTree {
                heads: block
                    .heads
                    .iter()
                    .map(|&h| if h == 0 { None } else { Some(h - 1) })
                    .collect(),
            };
            tree.validate().map_err(mismatch)?;
            for (t, tag) in utt.tokens.iter_mut().zip(&block.upos) {
                t.pos = Some(Pos::from_upos(tag));
            }
            utt.parse = Some(tree);
        }
    }
    Ok(())
}
