//! Tokenization, stemming and word n-grams shared by the matcher and the metrics.

mod porter;

pub use porter::porter_stem;

use std::fmt;

/// A lowercase, whitespace-free, non-empty word.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

impl Token {
    /// Builds a token from raw text, returning `None` if nothing alphabetic-edged remains.
    pub fn new(raw: &str) -> Option<Self> {
        let trimmed = raw.trim_matches(|c: char| !c.is_alphabetic());
        if trimmed.is_empty() || trimmed.chars().any(char::is_whitespace) {
            return None;
        }
        Some(Token(trimmed.to_lowercase()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Lowercases, splits on whitespace and strips non-alphabetic edge characters.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace().filter_map(Token::new).collect()
}

/// Convenience wrapper returning plain strings.
pub fn tokenize_str(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(Token::into_string).collect()
}

/// All contiguous windows of `n` words, space-joined, in order.
///
/// Returns an empty list when `n` is zero or exceeds the input length.
pub fn word_ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> Vec<String> {
    if n == 0 || n > tokens.len() {
        return Vec::new();
    }
    tokens
        .windows(n)
        .map(|w| w.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" "))
        .collect()
}

/// Every n-gram for `n` in `1..=tokens.len()`, shortest first.
pub fn all_word_ngrams<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    (1..=tokens.len())
        .flat_map(|n| word_ngrams(tokens, n))
        .collect()
}

/// True if `needle` occurs as a contiguous run inside `haystack`.
pub fn contains_sequence<A: AsRef<str>, B: AsRef<str>>(haystack: &[A], needle: &[B]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack
        .windows(needle.len())
        .any(|w| w.iter().zip(needle).all(|(a, b)| a.as_ref() == b.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strs(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(Token::as_str).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            strs(&tokenize("Low lung volumes")),
            ["low", "lung", "volumes"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(
            strs(&tokenize("Calcified hilar lymph")),
            ["calcified", "hilar", "lymph"]
        );
    }

    #[test]
    fn tokenize_strips_edges() {
        assert_eq!(
            strs(&tokenize("(effusion), volumes. ... ")),
            ["effusion", "volumes"]
        );
        assert_eq!(strs(&tokenize("patient's")), ["patient's"]);
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(
            word_ngrams(&["pulmonary", "disease", "chronic"], 2),
            ["pulmonary disease", "disease chronic"]
        );
        assert_eq!(word_ngrams(&["copd"], 1), ["copd"]);
        assert!(word_ngrams(&["a", "b"], 3).is_empty());
        assert!(word_ngrams(&["a", "b"], 0).is_empty());
    }

    #[test]
    fn all_ngrams_cover_every_order() {
        let grams = all_word_ngrams(&["low", "lung", "volumes"]);
        assert_eq!(grams.len(), 6);
        assert!(grams.contains(&"low lung volumes".to_string()));
        assert!(grams.contains(&"lung volumes".to_string()));
    }

    #[test]
    fn sequence_containment() {
        let hay = ["low", "lung", "volumes"];
        assert!(contains_sequence(&hay, &["lung", "volumes"]));
        assert!(!contains_sequence(&hay, &["volumes", "lung"]));
        assert!(!contains_sequence(&hay, &[] as &[&str]));
    }

    proptest! {
        #[test]
        fn ngram_count(words in proptest::collection::vec("[a-z]{1,6}", 0..12), n in 1usize..6) {
            let grams = word_ngrams(&words, n);
            prop_assert_eq!(grams.len(), (words.len() + 1).saturating_sub(n));
        }

        #[test]
        fn tokens_never_empty(text in "[ a-zA-Z.,;()0-9-]{0,60}") {
            for t in tokenize(&text) {
                prop_assert!(!t.as_str().is_empty());
                prop_assert!(!t.as_str().chars().any(char::is_whitespace));
                prop_assert_eq!(t.as_str().to_lowercase(), t.as_str());
            }
        }
    }
}
