//! Report corpora: annotation grammar, text cleanup, sentence splitting,
//! filtering, splits and corpus statistics.

mod io;
mod stats;

pub use io::{
    parse_report_line, read_corpus, read_corpus_from, read_splits, render_report_line,
    write_corpus, write_splits,
};
pub use stats::{compute_stats, CorpusStats};

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::tokenize_str;

/// Separator between the terms of an annotation.
pub const TERM_SEPARATOR: char = '/';
/// Maximum number of terms in one annotation.
pub const MAX_TERMS: usize = 8;
/// Annotation marking a report without findings.
pub const NORMAL_MARKER: &str = "normal";
/// De-identification artifact stripped from report text.
pub const DEID_TOKEN: &str = "XXXX";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("annotation is empty")]
    EmptyAnnotation,
    #[error("malformed annotation {raw:?}: {reason}")]
    MalformedAnnotation { raw: String, reason: String },
    #[error("report {id:?} has no usable findings or impression text")]
    NoUsableText { id: String },
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// One finding: a heading term followed by qualifier terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub heading: String,
    pub subheadings: Vec<String>,
    /// Display form, original case, terms joined by "/".
    pub raw: String,
}

impl Annotation {
    /// All terms, heading first, lowercased.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.heading.as_str()).chain(self.subheadings.iter().map(String::as_str))
    }

    pub fn term_count(&self) -> usize {
        1 + self.subheadings.len()
    }

    /// Lowercased terms joined by "/".
    pub fn normalized(&self) -> String {
        self.terms().collect::<Vec<_>>().join("/")
    }

    /// The annotation as a plain phrase with the separators removed.
    pub fn as_sentence(&self) -> String {
        self.terms().collect::<Vec<_>>().join(" ")
    }

    /// Word tokens of every term, in order.
    pub fn tokens(&self) -> Vec<String> {
        self.terms().flat_map(tokenize_str).collect()
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// Parses a "/"-separated annotation string.
pub fn parse_annotation(raw: &str) -> Result<Annotation> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(CorpusError::EmptyAnnotation);
    }
    let fields: Vec<&str> = trimmed.split(TERM_SEPARATOR).map(str::trim).collect();
    if fields.len() > MAX_TERMS {
        return Err(CorpusError::MalformedAnnotation {
            raw: raw.to_string(),
            reason: format!("{} terms, at most {MAX_TERMS} allowed", fields.len()),
        });
    }
    if let Some(pos) = fields.iter().position(|f| f.is_empty()) {
        return Err(CorpusError::MalformedAnnotation {
            raw: raw.to_string(),
            reason: format!("empty term at position {}", pos + 1),
        });
    }
    let mut lowered = fields.iter().map(|f| collapse_whitespace(f).to_lowercase());
    let heading = lowered.next().expect("at least one field");
    Ok(Annotation {
        heading,
        subheadings: lowered.collect(),
        raw: fields
            .iter()
            .map(|f| collapse_whitespace(f))
            .collect::<Vec<_>>()
            .join("/"),
    })
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A radiology report with its manual annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub comparison: Option<String>,
    pub indication: Option<String>,
    pub findings_text: Option<String>,
    pub impression_text: Option<String>,
    pub annotations: Vec<Annotation>,
    pub is_normal: bool,
}

impl Report {
    /// Sentences of the findings paragraph (Findings then Impression).
    pub fn sentences(&self) -> Result<Vec<Sentence>> {
        split_sentences(
            &self.id,
            self.findings_text.as_deref().unwrap_or(""),
            self.impression_text.as_deref().unwrap_or(""),
        )
    }

    pub fn has_usable_text(&self) -> bool {
        [&self.findings_text, &self.impression_text]
            .into_iter()
            .any(|t| t.as_deref().is_some_and(|t| !t.trim().is_empty()))
    }
}

/// One preprocessed sentence of a report's findings paragraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub report_id: String,
    pub index: usize,
    pub text: String,
    pub tokens: Vec<String>,
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

/// Strips de-identification tokens, digits, punctuation and redundant spaces.
///
/// Sentence-final `.`, `?` and `!` (followed by whitespace or the end of the
/// text) survive, attached to the preceding word.
pub fn preprocess_text(raw: &str) -> String {
    let chars: Vec<char> = raw.chars().collect();
    let mut cleaned = String::with_capacity(raw.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_ascii_digit() {
            continue;
        }
        if c.is_alphanumeric()
            || c.is_whitespace()
            || (is_terminal(c) && chars.get(i + 1).is_none_or(|n| n.is_whitespace()))
        {
            cleaned.push(c);
        } else if c == '\'' || c == '\u{2019}' {
            // apostrophes join ("patient's" -> "patients")
        } else {
            cleaned.push(' ');
        }
    }

    let mut out: Vec<String> = Vec::new();
    for token in cleaned.split_whitespace() {
        let core = token.trim_end_matches(is_terminal);
        let tail = &token[core.len()..];
        if core.is_empty() || core == DEID_TOKEN {
            if let Some(prev) = out.last_mut() {
                if !tail.is_empty() && !prev.ends_with(is_terminal) {
                    prev.push_str(&tail[..1]);
                }
            }
            continue;
        }
        let tail = tail.chars().next().map(String::from).unwrap_or_default();
        out.push(format!("{core}{tail}"));
    }
    out.join(" ")
}

/// Splits raw text after `.`, `?` or `!` followed by whitespace or the end.
fn raw_sentences(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if is_terminal(c) && iter.peek().is_none_or(|&(_, n)| n.is_whitespace()) {
            let end = i + c.len_utf8();
            pieces.push(&text[start..end]);
            start = end;
        }
    }
    if start < text.len() {
        pieces.push(&text[start..]);
    }
    pieces
}

/// Splits the Findings and then the Impression section into sentences.
pub fn split_sentences(report_id: &str, findings: &str, impression: &str) -> Result<Vec<Sentence>> {
    if findings.trim().is_empty() && impression.trim().is_empty() {
        return Err(CorpusError::NoUsableText {
            id: report_id.to_string(),
        });
    }
    let mut sentences = Vec::new();
    for piece in raw_sentences(findings)
        .into_iter()
        .chain(raw_sentences(impression))
    {
        let text = preprocess_text(piece);
        let tokens = tokenize_str(&text);
        if tokens.is_empty() {
            continue;
        }
        sentences.push(Sentence {
            report_id: report_id.to_string(),
            index: sentences.len(),
            text,
            tokens,
        });
    }
    Ok(sentences)
}

/// Drops reports annotated as normal, keeping the order of the rest.
pub fn filter_normals(reports: Vec<Report>) -> Vec<Report> {
    reports.into_iter().filter(|r| !r.is_normal).collect()
}

/// A seeded train/validation/test partition of report ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl CorpusSplit {
    pub fn len(&self) -> usize {
        self.train_ids.len() + self.val_ids.len() + self.test_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shuffles report ids with `seed` and cuts them by `ratios` (train, val, test).
///
/// Validation and test sizes are floored; the remainder goes to train.
pub fn make_splits(reports: &[Report], ratios: [f64; 3], seed: u64) -> Result<CorpusSplit> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    let mut ids: Vec<String> = reports.iter().map(|r| r.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n = ids.len();
    let n_val = ((n as f64) * ratios[1]).floor() as usize;
    let n_test = ((n as f64) * ratios[2]).floor() as usize;
    let n_train = n - n_val - n_test;
    let test_ids = ids.split_off(n_train + n_val);
    let val_ids = ids.split_off(n_train);
    Ok(CorpusSplit {
        train_ids: ids,
        val_ids,
        test_ids,
        seed,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(id: &str, findings: &str, anns: &[&str], normal: bool) -> Report {
        Report {
            id: id.into(),
            comparison: None,
            indication: None,
            findings_text: Some(findings.into()),
            impression_text: None,
            annotations: anns.iter().map(|a| parse_annotation(a).unwrap()).collect(),
            is_normal: normal,
        }
    }

    #[test]
    fn annotation_heading_and_subheadings() {
        let a = parse_annotation("Cardiomegaly/severe").unwrap();
        assert_eq!(a.heading, "cardiomegaly");
        assert_eq!(a.subheadings, ["severe"]);
        assert_eq!(a.raw, "Cardiomegaly/severe");

        let b = parse_annotation("Pericardial Effusion").unwrap();
        assert_eq!(b.heading, "pericardial effusion");
        assert!(b.subheadings.is_empty());
    }

    #[test]
    fn annotation_errors() {
        assert!(matches!(
            parse_annotation("a/b/c/d/e/f/g/h/i"),
            Err(CorpusError::MalformedAnnotation { .. })
        ));
        assert!(parse_annotation("a/b/c/d/e/f/g/h").is_ok());
        assert!(matches!(
            parse_annotation("   "),
            Err(CorpusError::EmptyAnnotation)
        ));
        assert!(matches!(
            parse_annotation("Opacity//left"),
            Err(CorpusError::MalformedAnnotation { .. })
        ));
        assert!(matches!(
            parse_annotation("Opacity/"),
            Err(CorpusError::MalformedAnnotation { .. })
        ));
    }

    #[test]
    fn annotation_renderings() {
        let a = parse_annotation(" Opacity / lung /  base / Left ").unwrap();
        assert_eq!(a.raw, "Opacity/lung/base/Left");
        assert_eq!(a.normalized(), "opacity/lung/base/left");
        assert_eq!(a.as_sentence(), "opacity lung base left");
        let b = parse_annotation("Calcinosis/lung/hilum/lymph nodes").unwrap();
        assert_eq!(
            b.tokens(),
            ["calcinosis", "lung", "hilum", "lymph", "nodes"]
        );
        assert_eq!(b.term_count(), 4);
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(preprocess_text("Stable XXXX hardware."), "Stable hardware.");
        assert_eq!(
            preprocess_text("2 views of the chest"),
            "views of the chest"
        );
        assert_eq!(preprocess_text("Low  lung   volumes."), "Low lung volumes.");
    }

    #[test]
    fn preprocess_edge_cases() {
        assert_eq!(preprocess_text("measuring 2.5 cm."), "measuring cm.");
        assert_eq!(preprocess_text("in the XXXX."), "in the.");
        assert_eq!(preprocess_text("XXXX."), "");
        assert_eq!(
            preprocess_text("heart-size, normal; patient's"),
            "heart size normal patients"
        );
        assert_eq!(preprocess_text("xxxx XXXXs"), "xxxx XXXXs");
        assert_eq!(preprocess_text(""), "");
    }

    #[test]
    fn split_examples() {
        let s = split_sentences("r", "Low lung volumes. Calcified hilar lymph.", "").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].index, s[1].index), (0, 1));
        assert_eq!(s[1].text, "Calcified hilar lymph.");
        assert_eq!(s[1].tokens, ["calcified", "hilar", "lymph"]);

        let s = split_sentences("r", "", "No acute disease.").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].tokens, ["no", "acute", "disease"]);

        assert!(matches!(
            split_sentences("r", "", " "),
            Err(CorpusError::NoUsableText { .. })
        ));
    }

    #[test]
    fn split_concatenates_sections_and_drops_empties() {
        let s = split_sentences(
            "r",
            "Heart is normal? XXXX. Lungs clear",
            "1. No acute disease!",
        )
        .unwrap();
        let texts: Vec<_> = s.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(
            texts,
            ["Heart is normal?", "Lungs clear", "No acute disease!"]
        );
        assert_eq!(s.iter().map(|s| s.index).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn filter_examples() {
        let corpus = vec![
            report("a", "x.", &["Opacity"], false),
            report("b", "x.", &[], true),
            report("c", "x.", &[], false),
        ];
        let kept = filter_normals(corpus.clone());
        assert_eq!(
            kept.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
            ["a", "c"]
        );

        let none_normal: Vec<_> = corpus.iter().filter(|r| !r.is_normal).cloned().collect();
        assert_eq!(filter_normals(none_normal.clone()), none_normal);

        let all_normal: Vec<_> = corpus.into_iter().filter(|r| r.is_normal).collect();
        assert!(filter_normals(all_normal).is_empty());
    }

    fn numbered(n: usize) -> Vec<Report> {
        (0..n)
            .map(|i| report(&format!("r{i}"), "x.", &[], false))
            .collect()
    }

    #[test]
    fn split_sizes_floor_with_remainder_to_train() {
        let s = make_splits(&numbered(2564), [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!(
            (s.train_ids.len(), s.val_ids.len(), s.test_ids.len()),
            (2052, 256, 256)
        );
        let again = make_splits(&numbered(2564), [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!(s, again);

        let all = make_splits(&numbered(10), [1.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(all.train_ids.len(), 10);
        assert!(all.val_ids.is_empty() && all.test_ids.is_empty());
    }

    #[test]
    fn bad_ratios() {
        assert!(matches!(
            make_splits(&numbered(3), [0.8, 0.1, 0.2], 1),
            Err(CorpusError::BadRatios(_))
        ));
        assert!(matches!(
            make_splits(&numbered(3), [1.2, -0.1, -0.1], 1),
            Err(CorpusError::BadRatios(_))
        ));
    }

    proptest! {
        #[test]
        fn annotation_round_trip(terms in proptest::collection::vec("[A-Za-z][A-Za-z ]{0,10}[A-Za-z]", 1..=8)) {
            let raw = terms.join("/");
            let a = parse_annotation(&raw).unwrap();
            let again = parse_annotation(&a.raw).unwrap();
            prop_assert_eq!(&again.raw, &a.raw);
            prop_assert_eq!(again, a);
        }

        #[test]
        fn preprocess_idempotent(text in "[ a-zA-Z0-9.,;:?!()'XX-]{0,80}") {
            let once = preprocess_text(&text);
            prop_assert_eq!(preprocess_text(&once), once);
        }

        #[test]
        fn splits_partition(n in 0usize..200, seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (val, test) = (a * (1.0 - 0.0) / 2.0, b / 2.0);
            let ratios = [1.0 - val - test, val, test];
            let reports = numbered(n);
            let s = make_splits(&reports, ratios, seed).unwrap();
            let mut all: Vec<_> = s.train_ids.iter().chain(&s.val_ids).chain(&s.test_ids).cloned().collect();
            all.sort();
            let mut expected: Vec<_> = reports.iter().map(|r| r.id.clone()).collect();
            expected.sort();
            prop_assert_eq!(all, expected);
            prop_assert_eq!(make_splits(&reports, ratios, seed).unwrap(), s);
        }
    }
}
