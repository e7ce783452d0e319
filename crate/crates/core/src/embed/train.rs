// Skip-gram with negative sampling over words plus hashed character n-grams.
//
// The input representation of a word is the mean of its own row and the rows of
// its character n-gram buckets. Only buckets reachable from the vocabulary are
// materialized, so the nominal bucket count costs nothing. Training is
// single-threaded and driven by one seeded ChaCha stream.

use std::collections::{BTreeSet, HashMap};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingTable, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negative: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub buckets: u32,
    pub learning_rate: f32,
    /// Frequent-word downsampling threshold; 0 disables it.
    pub sample: f64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negative: 5,
            epochs: 5,
            min_count: 1,
            min_n: 3,
            max_n: 6,
            buckets: 2_000_000,
            learning_rate: 0.05,
            sample: 1e-3,
            seed: 1,
        }
    }
}

/// Character n-grams of `<word>` with lengths in `min_n..=max_n`.
pub fn char_ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let chars: Vec<char> = format!("<{word}>").chars().collect();
    let mut out = Vec::new();
    for start in 0..chars.len() {
        for n in min_n..=max_n {
            if start + n > chars.len() {
                break;
            }
            out.push(chars[start..start + n].iter().collect());
        }
    }
    out
}

/// 32-bit FNV-1a over the UTF-8 bytes (sign-extended, as fastText does),
/// reduced modulo the bucket count.
pub fn ngram_bucket(gram: &str, buckets: u32) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for &b in gram.as_bytes() {
        h ^= (b as i8) as u32;
        h = h.wrapping_mul(16_777_619);
    }
    h % buckets.max(1)
}

fn sigmoid(x: f32) -> f32 {
    if x > 20.0 {
        1.0
    } else if x < -20.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

struct Trainer {
    dim: usize,
    /// Word rows first, then materialized bucket rows.
    input: Vec<f32>,
    output: Vec<f32>,
    /// Input row ids (word row plus bucket rows) per vocabulary word.
    subwords: Vec<Vec<usize>>,
    hidden: Vec<f32>,
    grad: Vec<f32>,
}

impl Trainer {
    fn update(&mut self, center: usize, target: usize, negatives: &[usize], lr: f32) {
        let d = self.dim;
        let rows = &self.subwords[center];
        self.hidden.iter_mut().for_each(|x| *x = 0.0);
        for &r in rows {
            for (h, x) in self.hidden.iter_mut().zip(&self.input[r * d..(r + 1) * d]) {
                *h += x;
            }
        }
        let inv = 1.0 / rows.len() as f32;
        self.hidden.iter_mut().for_each(|x| *x *= inv);
        self.grad.iter_mut().for_each(|x| *x = 0.0);

        for (i, &out_row) in std::iter::once(&target).chain(negatives).enumerate() {
            let label = if i == 0 { 1.0 } else { 0.0 };
            let out = &mut self.output[out_row * d..(out_row + 1) * d];
            let score: f32 = out.iter().zip(&self.hidden).map(|(a, b)| a * b).sum();
            let alpha = lr * (label - sigmoid(score));
            for ((g, o), h) in self.grad.iter_mut().zip(out.iter_mut()).zip(&self.hidden) {
                *g += alpha * *o;
                *o += alpha * h;
            }
        }
        for &r in rows {
            for (x, g) in self.input[r * d..(r + 1) * d].iter_mut().zip(&self.grad) {
                *x += g;
            }
        }
    }
}

/// Trains a subword skip-gram model on the given token streams.
pub fn train_embeddings<S: AsRef<str>>(
    streams: &[Vec<S>],
    config: &EmbeddingConfig,
) -> Result<EmbeddingTable> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in streams {
        for t in s {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= config.min_count.max(1) as u64)
        .collect();
    if vocab.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, (w, _))| (*w, i))
        .collect();
    let n_words = vocab.len();
    let d = config.dim;

    let word_buckets: Vec<Vec<u32>> = vocab
        .iter()
        .map(|(w, _)| {
            char_ngrams(w, config.min_n, config.max_n)
                .iter()
                .map(|g| ngram_bucket(g, config.buckets))
                .collect()
        })
        .collect();
    let bucket_ids: Vec<u32> = word_buckets
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let bucket_row: HashMap<u32, usize> = bucket_ids
        .iter()
        .enumerate()
        .map(|(i, &b)| (b, n_words + i))
        .collect();
    let subwords: Vec<Vec<usize>> = word_buckets
        .iter()
        .enumerate()
        .map(|(w, buckets)| {
            std::iter::once(w)
                .chain(buckets.iter().map(|b| bucket_row[b]))
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_rows = n_words + bucket_ids.len();
    let bound = 1.0 / d.max(1) as f32;
    let input: Vec<f32> = (0..n_rows * d)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    let mut trainer = Trainer {
        dim: d,
        input,
        output: vec![0.0; n_words * d],
        subwords,
        hidden: vec![0.0; d],
        grad: vec![0.0; d],
    };

    let total_tokens: u64 = vocab.iter().map(|(_, c)| c).sum();
    let keep_prob: Vec<f64> = vocab
        .iter()
        .map(|&(_, c)| {
            if config.sample <= 0.0 {
                return 1.0;
            }
            let threshold = config.sample * total_tokens as f64;
            ((c as f64 / threshold).sqrt() + 1.0) * threshold / c as f64
        })
        .collect();
    let noise = WeightedIndex::new(vocab.iter().map(|&(_, c)| (c as f64).powf(0.75)))
        .expect("non-empty vocabulary with positive counts");

    let total_work = (config.epochs as u64 * total_tokens).max(1);
    let mut processed = 0u64;
    let mut negatives = Vec::with_capacity(config.negative);
    let mut line: Vec<usize> = Vec::new();
    for _ in 0..config.epochs {
        for stream in streams {
            line.clear();
            for t in stream {
                if let Some(&w) = index.get(t.as_ref()) {
                    processed += 1;
                    if keep_prob[w] >= 1.0 || rng.gen::<f64>() < keep_prob[w] {
                        line.push(w);
                    }
                }
            }
            let progress = processed as f32 / total_work as f32;
            let lr = config.learning_rate * (1.0 - progress).max(1e-4);
            for pos in 0..line.len() {
                let boundary = rng.gen_range(1..=config.window.max(1));
                let lo = pos.saturating_sub(boundary);
                let hi = (pos + boundary).min(line.len() - 1);
                for ctx in lo..=hi {
                    if ctx == pos {
                        continue;
                    }
                    let target = line[ctx];
                    negatives.clear();
                    while negatives.len() < config.negative {
                        let neg = noise.sample(&mut rng);
                        if neg != target || n_words == 1 {
                            negatives.push(neg);
                        }
                    }
                    trainer.update(line[pos], target, &negatives, lr);
                }
            }
        }
    }

    let mut word_vectors = vec![0.0f32; n_words * d];
    for (w, rows) in trainer.subwords.iter().enumerate() {
        let out = &mut word_vectors[w * d..(w + 1) * d];
        for &r in rows {
            for (o, x) in out.iter_mut().zip(&trainer.input[r * d..(r + 1) * d]) {
                *o += x;
            }
        }
        let inv = 1.0 / rows.len() as f32;
        out.iter_mut().for_each(|x| *x *= inv);
    }
    let bucket_vectors = trainer.input[n_words * d..].to_vec();
    Ok(EmbeddingTable::from_parts(
        config.clone(),
        vocab.iter().map(|(w, _)| w.to_string()).collect(),
        word_vectors,
        bucket_ids,
        bucket_vectors,
    ))
}
