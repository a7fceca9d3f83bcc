//! Splitting raw procedure text into one-action instructions.

use crate::corpus::catalog::EntityCatalog;
use crate::corpus::tokenize::words;
use crate::error::{Error, Result};

/// Explicit step separator in raw recipe text.
pub const SEPARATOR: &str = "//";

/// Words that open a new instruction when they directly precede an action.
const CONNECTIVES: [&str; 5] = ["then", "and", "next", "finally", "afterwards"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub text: String,
    /// False for sentences with no recognized action; these are kept intact.
    pub has_action: bool,
}

struct Word {
    start: usize,
    text: String,
}

fn word_spans(text: &str) -> Vec<Word> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            out.push(Word {
                start: s,
                text: text[s..i].to_lowercase(),
            });
        }
    }
    if let Some(s) = start {
        out.push(Word {
            start: s,
            text: text[s..].to_lowercase(),
        });
    }
    out
}

/// `(word index, word count)` of every action-lexicon hit, longest match
/// first, non-overlapping.
fn action_hits(spans: &[Word], lexicon: &[Vec<String>]) -> Vec<(usize, usize)> {
    let mut hits = Vec::new();
    let mut i = 0;
    while i < spans.len() {
        let matched = lexicon
            .iter()
            .filter(|a| {
                !a.is_empty()
                    && i + a.len() <= spans.len()
                    && a.iter().zip(&spans[i..]).all(|(w, s)| *w == s.text)
            })
            .map(Vec::len)
            .max();
        match matched {
            Some(len) => {
                hits.push((i, len));
                i += len;
            }
            None => i += 1,
        }
    }
    hits
}

fn split_part(part: &str, lexicon: &[Vec<String>], out: &mut Vec<Segment>) {
    let spans = word_spans(part);
    let hits = action_hits(&spans, lexicon);
    let mut cuts = vec![0];
    for pair in hits.windows(2) {
        let (prev, prev_len) = pair[0];
        let mut w = pair[1].0;
        let floor = prev + prev_len;
        while w > floor && CONNECTIVES.contains(&spans[w - 1].text.as_str()) {
            w -= 1;
        }
        cuts.push(spans[w].start);
    }
    cuts.push(part.len());
    for pair in cuts.windows(2) {
        let text = part[pair[0]..pair[1]].trim();
        if !text.is_empty() {
            out.push(Segment {
                text: text.to_string(),
                has_action: !hits.is_empty(),
            });
        }
    }
}

/// Splits at `//` separators (which are dropped) and before every action hit
/// after the first inside a sentence. Connectives immediately before a hit
/// move with it into the new segment.
pub fn split_instructions(raw: &str, catalog: &EntityCatalog) -> Result<Vec<Segment>> {
    if raw.trim().is_empty() {
        return Err(Error::EmptyInput);
    }
    let lexicon: Vec<Vec<String>> = catalog.actions.names().iter().map(|a| words(a)).collect();
    let mut out = Vec::new();
    for part in raw.split(SEPARATOR) {
        split_part(part, &lexicon, &mut out);
    }
    Ok(out)
}
