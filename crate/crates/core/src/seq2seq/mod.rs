//! Sentence-to-annotation generation with a pointer-generator network.
//!
//! A two-layer bidirectional LSTM encodes the sentence, a single-layer LSTM
//! decoder with additive attention emits annotation terms, and a generation
//! probability mixes the vocabulary softmax with copying from the source.
//! Targets are the sentence's annotations, terms separated by "/",
//! annotations separated by a dedicated token and closed by ".".

mod beam;
mod io;
mod linalg;
mod lstm;
mod model;
mod params;
mod train;

pub use beam::{beam_search, greedy_decode, next_token, DecodeHypothesis, NextToken};
pub use io::{read_model, write_model};
pub use model::{final_distribution, PointerGenModel, SourceIds, PROB_EPSILON};
pub use train::{clip_global_norm, train, train_with, Adam, EpochLog, TrainReport};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Annotation, Report};
use crate::matcher::MatchedPair;
use crate::textproc::tokenize_str;

#[derive(Debug, Error)]
pub enum Seq2SeqError {
    #[error("cannot encode an empty source sequence")]
    EmptySource,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("non-finite loss or probability")]
    NaNGuard,
    #[error("invalid model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Seq2SeqError> = std::result::Result<T, E>;

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SLASH: usize = 4;
pub const ANNSEP: usize = 5;

pub const PAD_TOKEN: &str = "<pad>";
pub const SOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = ".";
pub const UNK_TOKEN: &str = "<unk>";
pub const SLASH_TOKEN: &str = "/";
pub const ANNSEP_TOKEN: &str = "<sep>";

const SPECIALS: [&str; 6] = [
    PAD_TOKEN,
    SOS_TOKEN,
    EOS_TOKEN,
    UNK_TOKEN,
    SLASH_TOKEN,
    ANNSEP_TOKEN,
];

/// Token/id bijection with the special tokens at fixed ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Tokens occurring at least `min_freq` times, most frequent first
    /// (ties alphabetical), after the specials.
    pub fn build<'a, I>(sequences: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in sequences {
            for t in seq {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq.max(1) && !SPECIALS.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()))
    }

    /// Specials followed by `tokens` (duplicates and specials skipped).
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in SPECIALS.iter().map(|s| s.to_string()).chain(tokens) {
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn from_pairs(pairs: &[TrainingPair], min_freq: usize) -> Self {
        Self::build(
            pairs
                .iter()
                .flat_map(|p| [p.source.as_slice(), p.target.as_slice()]),
            min_freq,
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, UNK if unknown.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub emb_dim: usize,
    /// Per direction; the decoder hidden size is twice this.
    pub enc_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            emb_dim: 100,
            enc_hidden: 256,
        }
    }
}

impl ModelDims {
    pub fn dec_hidden(&self) -> usize {
        2 * self.enc_hidden
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub beam_size: usize,
    pub max_decode_len: usize,
    pub epochs: usize,
    pub seed: u64,
    pub min_token_freq: usize,
    /// Whole findings paragraph as source instead of single sentences.
    pub paragraph_level: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 16,
            grad_clip_norm: 5.0,
            beam_size: 5,
            max_decode_len: 40,
            epochs: 20,
            seed: 1,
            min_token_freq: 1,
            paragraph_level: false,
        }
    }
}

/// A source token sequence and its target sequence (ending in EOS).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

/// Target tokens for a sentence: each annotation's terms split by "/",
/// annotations split by the separator token, then EOS.
pub fn build_targets(annotations: &[&Annotation]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, ann) in annotations.iter().enumerate() {
        if k > 0 {
            out.push(ANNSEP_TOKEN.to_string());
        }
        for (j, term) in ann.terms().enumerate() {
            if j > 0 {
                out.push(SLASH_TOKEN.to_string());
            }
            out.extend(tokenize_str(term));
        }
    }
    out.push(EOS_TOKEN.to_string());
    out
}

/// One pair per sentence with the annotations matched to it (in annotation
/// order); unmatched sentences target EOS alone.
pub fn sentence_pairs(reports: &[Report], matches: &[MatchedPair]) -> Vec<TrainingPair> {
    let mut by_sentence: HashMap<(&str, usize), Vec<usize>> = HashMap::new();
    for m in matches.iter().filter(|m| m.label == 1) {
        by_sentence
            .entry((m.report_id.as_str(), m.sentence_index))
            .or_default()
            .push(m.annotation_index);
    }
    let mut pairs = Vec::new();
    for report in reports {
        let Ok(sentences) = report.sentences() else {
            continue;
        };
        for s in &sentences {
            let mut idx = by_sentence
                .get(&(report.id.as_str(), s.index))
                .cloned()
                .unwrap_or_default();
            idx.sort_unstable();
            idx.dedup();
            let anns: Vec<&Annotation> = idx
                .iter()
                .filter_map(|&i| report.annotations.get(i))
                .collect();
            pairs.push(TrainingPair {
                source: s.tokens.clone(),
                target: build_targets(&anns),
            });
        }
    }
    pairs
}

/// Paragraph-level pairs: all sentence tokens of a report against all of its
/// annotations.
pub fn paragraph_pairs(reports: &[Report]) -> Vec<TrainingPair> {
    reports
        .iter()
        .filter_map(|r| {
            let sentences = r.sentences().ok()?;
            let anns: Vec<&Annotation> = r.annotations.iter().collect();
            Some(TrainingPair {
                source: sentences.into_iter().flat_map(|s| s.tokens).collect(),
                target: build_targets(&anns),
            })
        })
        .collect()
}

/// Splits decoded tokens (EOS already removed) into "/"-joined annotation
/// strings.
pub fn render_annotations<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in tokens.split(|t| t.as_ref() == ANNSEP_TOKEN) {
        let terms: Vec<String> = chunk
            .split(|t| t.as_ref() == SLASH_TOKEN)
            .map(|term| {
                term.iter()
                    .map(AsRef::as_ref)
                    .filter(|t| *t != EOS_TOKEN)
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .filter(|t| !t.is_empty())
            .collect();
        if !terms.is_empty() {
            out.push(terms.join("/"));
        }
    }
    out
}

/// Decodes each sentence (or the whole paragraph) and returns the union of
/// generated annotations in first-occurrence order.
pub fn annotate_report(
    model: &PointerGenModel,
    report: &Report,
    beam_size: usize,
    max_len: usize,
    paragraph_level: bool,
) -> Result<Vec<String>> {
    let sentences = report.sentences().unwrap_or_default();
    let sources: Vec<Vec<String>> = if paragraph_level {
        vec![sentences.into_iter().flat_map(|s| s.tokens).collect()]
    } else {
        sentences.into_iter().map(|s| s.tokens).collect()
    };
    let mut out: Vec<String> = Vec::new();
    for source in sources.iter().filter(|s| !s.is_empty()) {
        let hyp = beam_search(model, source, beam_size, max_len)?;
        for ann in render_annotations(&hyp.words) {
            if !out.contains(&ann) {
                out.push(ann);
            }
        }
    }
    Ok(out)
}

/// Reference annotations of a report in the same normalized form the model
/// produces.
pub fn reference_annotations(report: &Report) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for ann in &report.annotations {
        for rendered in render_annotations(&build_targets(&[ann])) {
            if !out.contains(&rendered) {
                out.push(rendered);
            }
        }
    }
    out
}
