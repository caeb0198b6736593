use serde::{Deserialize, Serialize};

use super::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizeMode {
    /// Whitespace split with leading/trailing punctuation detached.
    #[default]
    Word,
    /// One token per non-whitespace character (CJK-style text).
    Char,
}

impl std::str::FromStr for TokenizeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word" => Ok(TokenizeMode::Word),
            "char" => Ok(TokenizeMode::Char),
            other => Err(format!("unknown tokenize mode `{other}`")),
        }
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '，' | '。' | '？' | '！' | '、' | '；' | '：' | '“' | '”' | '‘' | '’' | '（' | '）' | '…' | '—'
        )
}

pub fn tokenize(text: &str, mode: TokenizeMode) -> Vec<Token> {
    let words: Vec<String> = match mode {
        TokenizeMode::Char => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
        TokenizeMode::Word => text.split_whitespace().flat_map(split_word).collect(),
    };
    words
        .into_iter()
        .enumerate()
        .map(|(i, w)| Token::new(w, i))
        .collect()
}

fn split_word(chunk: &str) -> Vec<String> {
    let chars: Vec<char> = chunk.chars().collect();
    let mut start = 0;
    let mut end = chars.len();
    while start < end && is_punct(chars[start]) {
        start += 1;
    }
    while end > start && is_punct(chars[end - 1]) {
        end -= 1;
    }
    let mut out: Vec<String> = chars[..start].iter().map(|c| c.to_string()).collect();
    if start < end {
        out.push(chars[start..end].iter().collect());
    }
    out.extend(chars[end..].iter().map(|c| c.to_string()));
    out
}
