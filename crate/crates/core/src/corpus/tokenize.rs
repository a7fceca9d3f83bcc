//! Lowercasing word/punctuation tokenizer with a closed vocabulary.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const BOS: u32 = 3;
pub const EOS: u32 = 4;
pub const SEP: u32 = 5;

/// Number of reserved ids at the start of every vocabulary.
pub const SPECIAL_COUNT: usize = 6;

const SPECIALS: [&str; SPECIAL_COUNT] = ["[PAD]", "[UNK]", "[CLS]", "[BOS]", "[EOS]", "[SEP]"];

/// Lowercased word tokens; every punctuation character is its own token.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// The tokenizer's canonical spelling of `text`: its words joined by spaces.
pub fn normalize(text: &str) -> String {
    words(text).join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Special tokens followed by every word of `texts` in sorted order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut seen = BTreeSet::new();
        for t in texts {
            seen.extend(words(t));
        }
        let tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).chain(seen).collect();
        tokens.into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map_or("[UNK]", String::as_str)
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }

    /// `[CLS]` followed by word ids, truncated to `max_len` tokens in total.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Vec<u32> {
        std::iter::once(CLS)
            .chain(words(text).iter().map(|w| self.id(w)))
            .take(max_len.max(1))
            .collect()
    }

    /// Word ids without `[CLS]` or truncation.
    pub fn encode_words(&self, text: &str) -> Vec<u32> {
        words(text).iter().map(|w| self.id(w)).collect()
    }

    /// Space-joined non-special tokens. Unknown ids render as `[UNK]`.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| id == UNK || !Self::is_special(id))
            .map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
