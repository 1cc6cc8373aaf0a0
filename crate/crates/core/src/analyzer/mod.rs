//! Text analysis: lowercase, split on non-alphanumeric characters, drop
//! English stopwords, Porter-stem.
//!
//! The pipeline approximates the default English analyzer used by Lucene
//! based toolkits. It does not apply possessive stripping or UAX#29 word
//! segmentation, so token streams can differ slightly on punctuation-heavy
//! input.

mod porter;

use std::ops::{Deref, Range};

pub use porter::stem;

/// Lucene's default English stop set.
pub const STOPWORDS: [&str; 33] = [
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it", "no", "not", "of",
    "on", "or", "such", "that", "the", "their", "then", "there", "these", "they", "this", "to", "was", "will", "with",
];

pub fn is_stopword(term: &str) -> bool {
    STOPWORDS.contains(&term)
}

/// Ordered, analyzer-normalized terms. Every term is non-empty and lowercase.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn into_terms(self) -> Vec<String> {
        self.0
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl Deref for TokenStream {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl FromIterator<String> for TokenStream {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        TokenStream(iter.into_iter().filter(|t| !t.is_empty()).collect())
    }
}

/// Byte ranges of the maximal alphanumeric runs in `text`.
pub fn word_spans(text: &str) -> impl Iterator<Item = Range<usize>> + '_ {
    let mut start = None;
    let mut iter = text.char_indices().chain(std::iter::once((text.len(), ' ')));
    std::iter::from_fn(move || {
        for (i, c) in iter.by_ref() {
            match (c.is_alphanumeric(), start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    start = None;
                    return Some(s..i);
                }
                _ => {}
            }
        }
        None
    })
}

/// Lowercased word, or `None` if it is a stopword.
fn normalize(word: &str) -> Option<String> {
    // lowercasing can introduce combining marks (e.g. U+0130); keep only
    // alphanumerics so re-tokenizing a joined stream splits the same way
    let lower: String = word.to_lowercase().chars().filter(|c| c.is_alphanumeric()).collect();
    if lower.is_empty() || is_stopword(&lower) {
        None
    } else {
        Some(lower)
    }
}

pub fn tokenize(text: &str) -> TokenStream {
    word_spans(text)
        .filter_map(|span| normalize(&text[span]))
        .map(|w| stem(&w))
        .collect()
}

/// Prefix of `text` ending after the `max_tokens`-th analyzer token.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    let mut count = 0;
    for span in word_spans(text) {
        if normalize(&text[span.clone()]).is_some() {
            count += 1;
            if count == max_tokens {
                return &text[..span.end];
            }
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms(text: &str) -> Vec<String> {
        tokenize(text).into_terms()
    }

    #[test]
    fn lowercases_and_drops_stopwords() {
        assert_eq!(terms("The cat SAT."), ["cat", "sat"]);
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ...  ").is_empty());
        assert!(tokenize("the of and").is_empty());
    }

    #[test]
    fn hyphenated_words_split() {
        // stems frozen from the reference vocabulary fixture
        assert_eq!(terms("nano-sized biomaterials"), ["nano", "size", "biomateri"]);
    }

    #[test]
    fn digits_are_kept() {
        assert_eq!(terms("COVID-19 in 2020"), ["covid", "19", "2020"]);
    }

    #[test]
    fn unicode_alphanumerics() {
        assert_eq!(terms("Ünïcode—dash"), ["ünïcode", "dash"]);
    }

    #[test]
    fn spans_cover_words() {
        let text = "a-b  cd!";
        let words: Vec<&str> = word_spans(text).map(|r| &text[r]).collect();
        assert_eq!(words, ["a", "b", "cd"]);
    }

    #[test]
    fn truncation_counts_analyzer_tokens() {
        let text = "The quick brown fox, the lazy dog.";
        assert_eq!(truncate_tokens(text, 2), "The quick brown");
        assert_eq!(truncate_tokens(text, 100), text);
        assert_eq!(truncate_tokens("", 3), "");
    }
}
