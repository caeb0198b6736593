//! Dialogue data model, tokenization, linearization and corpus I/O.

mod conllu;
mod io;
mod parse;
mod synth;
mod tokenize;
mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use conllu::{attach_parses, attach_sentences, read_conllu, ConlluSentence};
pub use io::{load_corpus, read_corpus, save_corpus, write_corpus};
pub use parse::{heuristic_parse, prepare_sample, DependencyTree, PosLexicon};
pub use synth::{generate_synthetic, SynthConfig, SYNTH_NOUNS, SYNTH_VERBS};
pub use tokenize::{tokenize, TokenizeMode};
pub use vocab::Vocab;

/// Coarse part-of-speech classes; only the pronoun/noun split feeds the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pos {
    #[serde(rename = "NOUN")]
    Noun,
    #[serde(rename = "PRON")]
    Pron,
    #[serde(rename = "VERB")]
    Verb,
    #[serde(rename = "OTHER")]
    Other,
}

impl Pos {
    /// Maps a Universal Dependencies UPOS tag onto the coarse classes.
    pub fn from_upos(tag: &str) -> Pos {
        match tag {
            "PRON" => Pos::Pron,
            "NOUN" | "PROPN" => Pos::Noun,
            "VERB" | "AUX" => Pos::Verb,
            _ => Pos::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Position within the owning utterance.
    pub index: usize,
    pub pos: Option<Pos>,
    /// Position within the linearized dialogue stream, once assigned.
    pub global_index: Option<usize>,
}

impl Token {
    pub fn new(text: impl Into<String>, index: usize) -> Self {
        Token {
            text: text.into(),
            index,
            pos: None,
            global_index: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub speaker: u32,
    /// Raw text as read from the corpus; kept so that save/load is lossless.
    pub text: String,
    pub tokens: Vec<Token>,
    pub parse: Option<DependencyTree>,
}

impl Utterance {
    pub fn new(speaker: u32, text: impl Into<String>, mode: TokenizeMode) -> Self {
        let text = text.into();
        let tokens = tokenize(&text, mode);
        Utterance {
            speaker,
            text,
            tokens,
            parse: None,
        }
    }

    /// Builds an utterance from already-split tokens; the text is their
    /// space-joined form.
    pub fn from_tokens<S: AsRef<str>>(speaker: u32, words: &[S]) -> Self {
        let tokens: Vec<Token> = words
            .iter()
            .enumerate()
            .map(|(i, w)| Token::new(w.as_ref(), i))
            .collect();
        let text = words
            .iter()
            .map(|w| w.as_ref())
            .collect::<Vec<_>>()
            .join(" ");
        Utterance {
            speaker,
            text,
            tokens,
            parse: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Rebuilds `text` from the tokens and renumbers token indices.
    pub(crate) fn sync_text(&mut self) {
        for (i, t) in self.tokens.iter_mut().enumerate() {
            t.index = i;
            t.global_index = None;
        }
        self.text = self
            .tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        self.parse = None;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub history: Vec<Utterance>,
    /// The last turn, the one to be rewritten.
    pub incomplete: Utterance,
}

impl Dialogue {
    /// History followed by the incomplete utterance.
    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.history.iter().chain(std::iter::once(&self.incomplete))
    }

    pub fn utterances_mut(&mut self) -> impl Iterator<Item = &mut Utterance> {
        self.history
            .iter_mut()
            .chain(std::iter::once(&mut self.incomplete))
    }

    pub fn num_utterances(&self) -> usize {
        self.history.len() + 1
    }

    /// Writes each token's stream position into `global_index`.
    pub fn assign_global_indices(&mut self) {
        let mut pos = 0;
        for utt in self.utterances_mut() {
            pos += 1; // speaker marker
            for tok in &mut utt.tokens {
                tok.global_index = Some(pos);
                pos += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    #[default]
    Original,
    EditAugmented,
    LlmAugmented,
    Synthetic,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Original => "original",
            Origin::EditAugmented => "edit-augmented",
            Origin::LlmAugmented => "llm-augmented",
            Origin::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Option<Origin> {
        match s {
            "original" => Some(Origin::Original),
            "edit-augmented" => Some(Origin::EditAugmented),
            "llm-augmented" => Some(Origin::LlmAugmented),
            "synthetic" => Some(Origin::Synthetic),
            _ => None,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub dialogue: Dialogue,
    pub rewritten: Utterance,
    /// Edit labels over the linearized stream, when known.
    pub labels: Option<Vec<crate::labels::EditLabel>>,
    pub origin: Origin,
    /// Record fields this crate does not interpret, written back verbatim.
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Sample {
    pub fn new(dialogue: Dialogue, rewritten: Utterance) -> Self {
        Sample {
            dialogue,
            rewritten,
            labels: None,
            origin: Origin::Original,
            extra: serde_json::Map::new(),
        }
    }

    /// Convenience constructor from plain strings; speakers alternate 1, 2, ...
    /// so that the incomplete utterance gets speaker 1 when the history has
    /// an even number of turns.
    pub fn from_texts(history: &[&str], incomplete: &str, rewritten: &str, mode: TokenizeMode) -> Self {
        let n = history.len();
        let speaker_of = |turn: usize| -> u32 {
            // last turn is speaker 1 or 2 depending on parity, alternating back
            if (n - turn) % 2 == 0 {
                1
            } else {
                2
            }
        };
        let history = history
            .iter()
            .enumerate()
            .map(|(i, t)| Utterance::new(speaker_of(i), *t, mode))
            .collect();
        let incomplete = Utterance::new(speaker_of(n), incomplete, mode);
        let rewritten = Utterance::new(incomplete.speaker, rewritten, mode);
        Sample::new(Dialogue { history, incomplete }, rewritten)
    }
}

/// Where a stream position came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    /// Index into `Dialogue::utterances()`.
    pub utterance: usize,
    pub is_speaker_marker: bool,
    /// Token index inside the utterance; `None` for markers.
    pub token: Option<usize>,
}

/// The dialogue flattened to `[S_a] s_1 [S_b] s_2 ... [S_x] s_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearized {
    pub tokens: Vec<String>,
    pub provenance: Vec<Provenance>,
    /// Stream position of each utterance's speaker marker.
    pub marker_positions: Vec<usize>,
}

impl Linearized {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Stream position of token `tok` of utterance `utt`.
    pub fn position(&self, utt: usize, tok: usize) -> usize {
        self.marker_positions[utt] + 1 + tok
    }

    /// Index of the incomplete utterance (always the last one).
    pub fn incomplete_index(&self) -> usize {
        self.marker_positions.len() - 1
    }
}

pub fn speaker_marker(speaker: u32) -> String {
    format!("[S{speaker}]")
}

pub fn linearize(dialogue: &Dialogue) -> Linearized {
    let mut tokens = Vec::new();
    let mut provenance = Vec::new();
    let mut marker_positions = Vec::with_capacity(dialogue.num_utterances());
    for (u, utt) in dialogue.utterances().enumerate() {
        marker_positions.push(tokens.len());
        tokens.push(speaker_marker(utt.speaker));
        provenance.push(Provenance {
            utterance: u,
            is_speaker_marker: true,
            token: None,
        });
        for (i, tok) in utt.tokens.iter().enumerate() {
            tokens.push(tok.text.clone());
            provenance.push(Provenance {
                utterance: u,
                is_speaker_marker: false,
                token: Some(i),
            });
        }
    }
    Linearized {
        tokens,
        provenance,
        marker_positions,
    }
}
