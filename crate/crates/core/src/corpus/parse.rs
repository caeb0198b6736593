use std::collections::HashSet;

use super::{Pos, Sample, Utterance, SYNTH_NOUNS, SYNTH_VERBS};

/// Per-token head indices; `None` marks the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyTree {
    pub heads: Vec<Option<usize>>,
}

impl DependencyTree {
    pub fn root(&self) -> Option<usize> {
        let mut roots = self.heads.iter().enumerate().filter(|(_, h)| h.is_none());
        let first = roots.next().map(|(i, _)| i);
        if roots.next().is_some() {
            None
        } else {
            first
        }
    }

    /// Checks single root, in-range heads, and acyclicity.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.heads.len();
        let roots = self.heads.iter().filter(|h| h.is_none()).count();
        if n > 0 && roots != 1 {
            return Err(format!("expected exactly one root, found {roots}"));
        }
        for (i, h) in self.heads.iter().enumerate() {
            match h {
                Some(h) if *h >= n => return Err(format!("token {i} has head {h} out of range")),
                Some(h) if *h == i => return Err(format!("token {i} heads itself")),
                _ => {}
            }
        }
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = self.heads[cur] {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(format!("cycle through token {start}"));
                }
            }
        }
        Ok(())
    }
}

/// Deterministic chain tree used when no parse file is supplied.
///
/// The first `VERB` token is the root (the middle token `len / 2` when there
/// is none). Every other token attaches to its neighbour one step closer to
/// the root, so the tree is two chains hanging off the root.
pub fn heuristic_parse(utt: &Utterance) -> DependencyTree {
    let n = utt.tokens.len();
    if n == 0 {
        return DependencyTree { heads: vec![] };
    }
    let root = utt
        .tokens
        .iter()
        .position(|t| t.pos == Some(Pos::Verb))
        .unwrap_or(n / 2);
    let heads = (0..n)
        .map(|i| match i.cmp(&root) {
            std::cmp::Ordering::Less => Some(i + 1),
            std::cmp::Ordering::Greater => Some(i - 1),
            std::cmp::Ordering::Equal => None,
        })
        .collect();
    DependencyTree { heads }
}

/// Word lists for tagging tokens that arrive without a parse file.
#[derive(Debug, Clone)]
pub struct PosLexicon {
    pronouns: HashSet<String>,
    verbs: HashSet<String>,
    nouns: HashSet<String>,
}

const ENGLISH_PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "you", "your", "yours", "he", "him", "his", "she", "her", "hers", "it",
    "its", "we", "us", "our", "they", "them", "their", "this", "that", "these", "those", "who",
    "whom", "what", "which", "there",
];

const ENGLISH_VERBS: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "am", "do", "does", "did", "have", "has", "had",
    "know", "think", "want", "like", "go", "see", "tell", "provide", "recommend", "visit",
    "must", "can", "would", "should",
];

impl PosLexicon {
    pub fn new<'a>(
        pronouns: impl IntoIterator<Item = &'a str>,
        verbs: impl IntoIterator<Item = &'a str>,
        nouns: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        PosLexicon {
            pronouns: pronouns.into_iter().map(str::to_lowercase).collect(),
            verbs: verbs.into_iter().map(str::to_lowercase).collect(),
            nouns: nouns.into_iter().map(str::to_lowercase).collect(),
        }
    }

    /// English function words plus the synthetic grammar's vocabulary.
    pub fn english() -> Self {
        Self::new(
            ENGLISH_PRONOUNS.iter().copied(),
            ENGLISH_VERBS.iter().chain(SYNTH_VERBS).copied(),
            SYNTH_NOUNS.iter().copied(),
        )
    }

    pub fn is_pronoun(&self, word: &str) -> bool {
        self.pronouns.contains(&word.to_lowercase())
    }

    /// Lexicon lookup, falling back to "capitalized and not sentence-initial
    /// means noun".
    pub fn tag(&self, word: &str, index: usize) -> Pos {
        let lower = word.to_lowercase();
        if self.pronouns.contains(&lower) {
            Pos::Pron
        } else if self.verbs.contains(&lower) {
            Pos::Verb
        } else if self.nouns.contains(&lower) {
            Pos::Noun
        } else if index > 0 && word.chars().next().is_some_and(char::is_uppercase) {
            Pos::Noun
        } else {
            Pos::Other
        }
    }

    pub fn tag_utterance(&self, utt: &mut Utterance) {
        for t in &mut utt.tokens {
            if t.pos.is_none() {
                t.pos = Some(self.tag(&t.text, t.index));
            }
        }
    }
}

impl Default for PosLexicon {
    fn default() -> Self {
        Self::english()
    }
}

/// Fills in missing POS tags and parses so the graph can be built.
pub fn prepare_sample(sample: &mut Sample, lexicon: &PosLexicon) {
    for utt in sample.dialogue.utterances_mut() {
        lexicon.tag_utterance(utt);
        if utt.parse.is_none() {
            utt.parse = Some(heuristic_parse(utt));
        }
    }
    sample.dialogue.assign_global_indices();
}
