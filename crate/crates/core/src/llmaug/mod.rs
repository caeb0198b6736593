//! History paraphrasing through a chat-completion endpoint.
//!
//! A prompt asks the model to rewrite every turn but the last one. The
//! reply is split on semicolons and accepted only if it has one item per
//! history turn (optionally followed by the unchanged last turn) and no
//! empty item. Accepted replies become new samples with the original
//! incomplete and rewritten utterances.

mod client;
mod transport;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use client::{augment_samples, token_from_env, ClientConfig, LlmClient, API_KEY_VAR};
pub use transport::{HttpResponse, MockReply, MockTransport, Transport, UreqTransport};

use crate::corpus::{Dialogue, Origin, Sample, TokenizeMode, Utterance};
use crate::error::{Error, Result};

/// Fixed task instruction placed at the start of every prompt.
pub const INSTRUCTION: &str = "Given a dialogue with utterances from different speakers separated by semicolons, keep the last utterance unchanged, rewrite the historical utterances, and keep the semantics of the dialogue unchanged.";

const BUNDLED_EXAMPLES: &str = include_str!("../../assets/llm_examples.json");

/// One in-context demonstration: a dialogue and its paraphrased form, both
/// ending with the same last turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub input: Vec<String>,
    pub output: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub examples: Vec<Example>,
}

impl PromptTemplate {
    /// The five bundled examples.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_EXAMPLES).expect("bundled examples parse")
    }

    pub fn without_examples() -> Self {
        PromptTemplate { examples: Vec::new() }
    }

    /// Reads a JSON array of `{"input": [...], "output": [...]}` objects.
    pub fn from_json(text: &str) -> Result<Self> {
        let examples: Vec<Example> =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("prompt examples: {e}")))?;
        for (i, ex) in examples.iter().enumerate() {
            if ex.input.is_empty() || ex.input.len() != ex.output.len() {
                return Err(Error::Config(format!(
                    "prompt example {i}: input and output must have the same non-zero number of turns"
                )));
            }
        }
        Ok(PromptTemplate { examples })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Turns joined by `"; "`.
pub fn serialize_turns<S: AsRef<str>>(turns: &[S]) -> String {
    turns.iter().map(|t| t.as_ref().trim()).collect::<Vec<_>>().join("; ")
}

fn dialogue_turns(d: &Dialogue) -> Vec<&str> {
    d.utterances().map(|u| u.text.as_str()).collect()
}

/// Instruction, demonstrations, then the sample's turns (history followed
/// by the incomplete utterance).
pub fn build_prompt(sample: &Sample, template: &PromptTemplate) -> String {
    let mut out = String::from(INSTRUCTION);
    if !template.examples.is_empty() {
        out.push_str(" Here are some examples.\nExamples:");
        for ex in &template.examples {
            out.push_str("\nInput: ");
            out.push_str(&serialize_turns(&ex.input));
            out.push_str("\nOutput: ");
            out.push_str(&serialize_turns(&ex.output));
        }
    }
    out.push_str("\nInput: ");
    out.push_str(&serialize_turns(&dialogue_turns(&sample.dialogue)));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Verdict {
    Accepted,
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationResult {
    /// New history turns; empty when rejected.
    pub history: Vec<String>,
    #[serde(flatten)]
    pub verdict: Verdict,
}

impl AugmentationResult {
    fn reject(reason: impl Into<String>) -> Self {
        AugmentationResult {
            history: Vec::new(),
            verdict: Verdict::Rejected { reason: reason.into() },
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }

    /// The augmented sample: new history (speakers kept), original incomplete
    /// and rewritten utterances, no labels.
    pub fn to_sample(&self, original: &Sample, mode: TokenizeMode) -> Option<Sample> {
        if !self.is_accepted() {
            return None;
        }
        let history = original
            .dialogue
            .history
            .iter()
            .zip(&self.history)
            .map(|(u, text)| Utterance::new(u.speaker, text.as_str(), mode))
            .collect();
        let mut s = original.clone();
        s.dialogue = Dialogue {
            history,
            incomplete: strip(&original.dialogue.incomplete),
        };
        s.rewritten = strip(&original.rewritten);
        s.labels = None;
        s.origin = Origin::LlmAugmented;
        Some(s)
    }
}

fn strip(u: &Utterance) -> Utterance {
    let mut u = u.clone();
    u.parse = None;
    for t in &mut u.tokens {
        t.pos = None;
        t.global_index = None;
    }
    u
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Splits a reply on semicolons and checks it against the sample.
pub fn parse_and_validate(raw: &str, original: &Sample) -> AugmentationResult {
    let h = original.dialogue.history.len();
    let mut items: Vec<String> = raw.trim().split(';').map(|s| s.trim().to_string()).collect();
    if items.last().is_some_and(String::is_empty) && items.len() > 1 {
        // tolerate a trailing separator
        items.pop();
    }
    if items.len() == h + 1 {
        let last = items.pop().expect("non-empty");
        let expected: String = original.dialogue.incomplete.words().concat();
        if squash(&last) != squash(&expected) {
            return AugmentationResult::reject(format!(
                "last utterance changed: expected `{}`, got `{last}`",
                original.dialogue.incomplete.text
            ));
        }
    }
    if items.len() != h {
        return AugmentationResult::reject(format!(
            "count mismatch: expected {h} history utterances, got {}",
            items.len()
        ));
    }
    if let Some(i) = items.iter().position(String::is_empty) {
        return AugmentationResult::reject(format!("utterance {i} is empty"));
    }
    AugmentationResult {
        history: items,
        verdict: Verdict::Accepted,
    }
}
