//! Ellipsis <-> coreference conversion of incomplete utterances.

use std::path::Path;

use super::{align, EditOp};
use crate::corpus::{Origin, Pos, Sample, Token};
use crate::error::{Error, Result};

/// Ordered pronoun list; the first entry (or the configured default) is the
/// one inserted by [`augment_ellipsis_to_coref`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PronounLexicon {
    pronouns: Vec<String>,
    default: Option<String>,
}

impl PronounLexicon {
    pub fn new(pronouns: Vec<String>) -> Self {
        PronounLexicon {
            pronouns,
            default: None,
        }
    }

    pub fn english() -> Self {
        Self::new(["it", "he", "she", "they", "this", "that"].map(String::from).to_vec())
    }

    /// One pronoun per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lex = Self::parse(&text);
        if lex.pronouns.is_empty() {
            return Err(Error::Config(format!("{}: empty pronoun lexicon", path.display())));
        }
        Ok(lex)
    }

    pub fn with_default(mut self, pronoun: impl Into<String>) -> Self {
        self.default = Some(pronoun.into());
        self
    }

    pub fn contains(&self, word: &str) -> bool {
        self.pronouns.iter().any(|p| p.eq_ignore_ascii_case(word))
    }

    pub fn insertion_pronoun(&self) -> Option<&str> {
        self.default.as_deref().or(self.pronouns.first().map(String::as_str))
    }
}

impl Default for PronounLexicon {
    fn default() -> Self {
        Self::english()
    }
}

fn edited(sample: &Sample, tokens: Vec<Token>) -> Sample {
    let mut out = sample.clone();
    out.dialogue.incomplete.tokens = tokens;
    out.dialogue.incomplete.sync_text();
    for utt in out.dialogue.history.iter_mut() {
        for t in &mut utt.tokens {
            t.global_index = None;
        }
    }
    out.labels = None;
    out.origin = Origin::EditAugmented;
    out
}

/// Turns a coreference into an ellipsis by deleting the leftmost replaced
/// pronoun. `None` when no single-token replaced span is a pronoun.
pub fn augment_coref_to_ellipsis(sample: &Sample, lexicon: &PronounLexicon) -> Option<Sample> {
    let inc = &sample.dialogue.incomplete;
    let script = align(&inc.words(), &sample.rewritten.words());
    let target = script.ops.iter().find_map(|op| match op {
        EditOp::Replace { source, tokens, .. } if source.len() == 1 && !tokens.is_empty() => {
            let tok = &inc.tokens[source.start];
            (tok.pos == Some(Pos::Pron) || lexicon.contains(&tok.text)).then_some(source.start)
        }
        _ => None,
    })?;
    let mut tokens = inc.tokens.clone();
    tokens.remove(target);
    Some(edited(sample, tokens))
}

/// Turns an ellipsis into a coreference by inserting a pronoun at the
/// leftmost insertion point. `None` when the alignment has no insertion.
pub fn augment_ellipsis_to_coref(sample: &Sample, lexicon: &PronounLexicon) -> Option<Sample> {
    let inc = &sample.dialogue.incomplete;
    let script = align(&inc.words(), &sample.rewritten.words());
    let anchor = script.ops.iter().find_map(|op| match op {
        EditOp::Insert { anchor, .. } => Some(*anchor),
        _ => None,
    })?;
    let pronoun = lexicon.insertion_pronoun()?;
    let mut tokens = inc.tokens.clone();
    let mut tok = Token::new(pronoun, anchor);
    tok.pos = Some(Pos::Pron);
    tokens.insert(anchor, tok);
    Some(edited(sample, tokens))
}
