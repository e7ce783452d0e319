//! Subword-aware word embeddings, nearest-neighbour queries and the
//! mean-pooling sentence encoder used as the matcher's last resort.

mod encoder;
mod io;
mod train;

pub use encoder::{
    calibrate_threshold, make_encoder_pairs, Calibration, EncoderPair, SentenceEncoder,
};
pub use io::{read_embeddings, write_embeddings};
pub use train::{char_ngrams, ngram_bucket, train_embeddings, EmbeddingConfig};

use std::cmp::Ordering;
use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::Report;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot train embeddings on an empty corpus")]
    EmptyCorpus,
    #[error("cannot embed an empty sentence")]
    EmptySentence,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("threshold calibration needs both positive and negative pairs")]
    DegenerateLabels,
    #[error("invalid embedding file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EmbedError> = std::result::Result<T, E>;

/// Token streams for embedding training: one per report, the findings
/// paragraph's sentences concatenated.
pub fn report_streams(reports: &[Report]) -> Vec<Vec<String>> {
    reports
        .iter()
        .filter_map(|r| r.sentences().ok())
        .map(|ss| ss.into_iter().flat_map(|s| s.tokens).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Default neighbourhood size for similar-word expansion.
pub const DEFAULT_K: usize = 5;

/// Trained word vectors plus the character n-gram buckets that compose
/// vectors for unseen words.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub(crate) config: EmbeddingConfig,
    pub(crate) words: Vec<String>,
    pub(crate) index: HashMap<String, usize>,
    /// `words.len() x dim`, row-major; each row is the composed word vector.
    pub(crate) word_vectors: Vec<f32>,
    /// Sorted ids of the buckets that were touched during training.
    pub(crate) bucket_ids: Vec<u32>,
    pub(crate) bucket_index: HashMap<u32, usize>,
    /// `bucket_ids.len() x dim`, row-major.
    pub(crate) bucket_vectors: Vec<f32>,
}

impl EmbeddingTable {
    pub(crate) fn from_parts(
        config: EmbeddingConfig,
        words: Vec<String>,
        word_vectors: Vec<f32>,
        bucket_ids: Vec<u32>,
        bucket_vectors: Vec<f32>,
    ) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let bucket_index = bucket_ids
            .iter()
            .enumerate()
            .map(|(i, &b)| (b, i))
            .collect();
        Self {
            config,
            words,
            index,
            word_vectors,
            bucket_ids,
            bucket_index,
            bucket_vectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn config(&self) -> &EmbeddingConfig {
        &self.config
    }

    pub fn vocab(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    fn row(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.word_vectors[i * d..(i + 1) * d]
    }

    /// The vector of a vocabulary word, or the mean of its n-gram buckets
    /// for an unseen word. Buckets never touched in training contribute zero.
    pub fn vector(&self, word: &str) -> Vec<f32> {
        if let Some(&i) = self.index.get(word) {
            return self.row(i).to_vec();
        }
        let d = self.dim();
        let mut out = vec![0.0f32; d];
        let grams = char_ngrams(word, self.config.min_n, self.config.max_n);
        if grams.is_empty() {
            return out;
        }
        for g in &grams {
            let bucket = ngram_bucket(g, self.config.buckets);
            if let Some(&row) = self.bucket_index.get(&bucket) {
                for (o, v) in out
                    .iter_mut()
                    .zip(&self.bucket_vectors[row * d..(row + 1) * d])
                {
                    *o += v;
                }
            }
        }
        let n = grams.len() as f32;
        out.iter_mut().for_each(|x| *x /= n);
        out
    }

    /// The `k` vocabulary words closest to `word` by cosine, excluding `word`
    /// itself; ties are broken alphabetically.
    pub fn most_similar(&self, word: &str, k: usize) -> Vec<(String, f64)> {
        let query = self.vector(word);
        let mut scored: Vec<(&str, f64)> = self
            .words
            .iter()
            .enumerate()
            .filter(|(_, w)| w.as_str() != word)
            .map(|(i, w)| (w.as_str(), cosine_unchecked(&query, self.row(i))))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(b.0))
        });
        scored
            .into_iter()
            .take(k)
            .map(|(w, c)| (w.to_string(), c))
            .collect()
    }
}

/// Cosine similarity; a zero-length operand yields 0.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch(u.len(), v.len()));
    }
    Ok(cosine_unchecked(u, v))
}

fn cosine_unchecked(u: &[f32], v: &[f32]) -> f64 {
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0)
}
