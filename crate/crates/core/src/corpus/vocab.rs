use std::collections::{BTreeSet, HashMap};

use super::{speaker_marker, Sample};

/// Token/id mapping.
///
/// Reserved ids are fixed: `0 <pad>`, `1 <s>`, `2 </s>`, `3 <unk>`. Speaker
/// markers follow in ascending speaker order, then every other token in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub const PAD: usize = 0;
    pub const BOS: usize = 1;
    pub const EOS: usize = 2;
    pub const UNK: usize = 3;
    pub const RESERVED: [&'static str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

    pub fn build<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Vocab {
        let mut speakers = BTreeSet::new();
        let mut words = BTreeSet::new();
        for s in samples {
            for utt in s.dialogue.utterances().chain(std::iter::once(&s.rewritten)) {
                speakers.insert(utt.speaker);
                for t in &utt.tokens {
                    words.insert(t.text.clone());
                }
            }
        }
        let mut tokens: Vec<String> = Self::RESERVED.iter().map(|s| s.to_string()).collect();
        let markers: Vec<String> = speakers.into_iter().map(speaker_marker).collect();
        for m in &markers {
            words.remove(m);
        }
        tokens.extend(markers);
        for w in words {
            if !Self::RESERVED.contains(&w.as_str()) {
                tokens.push(w);
            }
        }
        Self::from_tokens(tokens).expect("built vocabulary is duplicate-free")
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab, String> {
        if tokens.len() < Self::RESERVED.len()
            || tokens[..Self::RESERVED.len()]
                .iter()
                .zip(Self::RESERVED)
                .any(|(a, b)| a != b)
        {
            return Err("vocabulary does not start with the reserved tokens".into());
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(format!("duplicate vocabulary entry `{t}`"));
            }
        }
        Ok(Vocab { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }

    pub fn is_reserved(id: usize) -> bool {
        id < Self::RESERVED.len()
    }
}
