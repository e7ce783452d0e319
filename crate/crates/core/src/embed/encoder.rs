use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cosine_unchecked, EmbedError, EmbeddingTable, Result};
use crate::corpus::Report;
use crate::matcher::MatchedPair;

/// Mean-pooled sentence embeddings compared by cosine against a threshold.
#[derive(Debug, Clone, Copy)]
pub struct SentenceEncoder<'a> {
    table: &'a EmbeddingTable,
    threshold: f64,
}

impl<'a> SentenceEncoder<'a> {
    pub fn new(table: &'a EmbeddingTable, threshold: f64) -> Self {
        Self { table, threshold }
    }

    pub fn table(&self) -> &'a EmbeddingTable {
        self.table
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(self, threshold: f64) -> Self {
        Self { threshold, ..self }
    }

    /// Arithmetic mean of the token vectors.
    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f32>> {
        if tokens.is_empty() {
            return Err(EmbedError::EmptySentence);
        }
        let mut sum = vec![0.0f64; self.table.dim()];
        for t in tokens {
            for (s, x) in sum.iter_mut().zip(self.table.vector(t.as_ref())) {
                *s += x as f64;
            }
        }
        let n = tokens.len() as f64;
        Ok(sum.into_iter().map(|s| (s / n) as f32).collect())
    }

    pub fn similarity<A: AsRef<str>, B: AsRef<str>>(&self, a: &[A], b: &[B]) -> Result<f64> {
        Ok(cosine_unchecked(&self.embed(a)?, &self.embed(b)?))
    }

    /// True when the pair's similarity lies strictly above the threshold.
    pub fn accepts(&self, similarity: f64) -> bool {
        similarity > self.threshold
    }
}

/// A sentence/annotation pair labelled 1 (matched) or 0 (unrelated).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderPair {
    pub report_id: String,
    pub sentence_index: usize,
    pub annotation_index: usize,
    pub sentence: String,
    pub sentence_tokens: Vec<String>,
    /// The annotation with its separators removed.
    pub annotation: String,
    pub annotation_tokens: Vec<String>,
    pub label: u8,
}

/// Every manual match becomes a positive pair; each report also contributes
/// up to two random unmatched (sentence, annotation) pairs as negatives.
pub fn make_encoder_pairs(
    reports: &[Report],
    manual: &[MatchedPair],
    seed: u64,
) -> Vec<EncoderPair> {
    let matched: HashSet<(&str, usize, usize)> = manual
        .iter()
        .filter(|m| m.label == 1)
        .map(|m| (m.report_id.as_str(), m.annotation_index, m.sentence_index))
        .collect();
    let manual_reports: HashSet<&str> = matched.iter().map(|m| m.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();

    for report in reports
        .iter()
        .filter(|r| manual_reports.contains(r.id.as_str()))
    {
        let Ok(sentences) = report.sentences() else {
            continue;
        };
        let make = |s: usize, a: usize, label: u8| {
            let ann = &report.annotations[a];
            EncoderPair {
                report_id: report.id.clone(),
                sentence_index: s,
                annotation_index: a,
                sentence: sentences[s].text.clone(),
                sentence_tokens: sentences[s].tokens.clone(),
                annotation: ann.as_sentence(),
                annotation_tokens: ann.tokens(),
                label,
            }
        };
        let mut negatives = Vec::new();
        for a in 0..report.annotations.len() {
            for s in 0..sentences.len() {
                if matched.contains(&(report.id.as_str(), a, s)) {
                    pairs.push(make(s, a, 1));
                } else {
                    negatives.push((s, a));
                }
            }
        }
        let take = negatives.len().min(2);
        let mut chosen = sample(&mut rng, negatives.len(), take).into_vec();
        chosen.sort_unstable();
        pairs.extend(
            chosen
                .into_iter()
                .map(|i| make(negatives[i].0, negatives[i].1, 0)),
        );
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub accuracy: f64,
    /// Pearson correlation between similarity and the 0/1 label.
    pub correlation: f64,
}

/// Picks the accuracy-maximizing threshold over labelled pairs.
///
/// Candidates are the midpoints between consecutive distinct similarities,
/// plus one threshold below all of them and the maximum itself (the
/// all-positive and all-negative classifiers). Ties go to the larger
/// threshold.
pub fn calibrate_threshold(
    encoder: &SentenceEncoder<'_>,
    pairs: &[EncoderPair],
) -> Result<Calibration> {
    let scored = pairs
        .iter()
        .map(|p| {
            Ok((
                encoder.similarity(&p.sentence_tokens, &p.annotation_tokens)?,
                p.label == 1,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    best_threshold(&scored)
}

pub(crate) fn best_threshold(scored: &[(f64, bool)]) -> Result<Calibration> {
    let positives = scored.iter().filter(|s| s.1).count();
    if positives == 0 || positives == scored.len() {
        return Err(EmbedError::DegenerateLabels);
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    let n = sorted.len() as f64;
    // Threshold below everything: all predicted positive.
    let correlation = label_correlation(scored);
    let mut best = Calibration {
        threshold: sorted[0].0 - 1e-6,
        accuracy: positives as f64 / n,
        correlation,
    };
    // Sweep upwards; after passing index i, items 0..=i are predicted negative.
    let mut correct = positives as i64;
    for i in 0..sorted.len() {
        correct += if sorted[i].1 { -1 } else { 1 };
        let is_boundary = i + 1 == sorted.len() || sorted[i + 1].0 > sorted[i].0;
        if !is_boundary {
            continue;
        }
        let threshold = match sorted.get(i + 1) {
            Some(next) => 0.5 * (sorted[i].0 + next.0),
            None => sorted[i].0,
        };
        let accuracy = correct as f64 / n;
        if accuracy >= best.accuracy {
            best = Calibration {
                threshold,
                accuracy,
                correlation,
            };
        }
    }
    Ok(best)
}

fn label_correlation(scored: &[(f64, bool)]) -> f64 {
    let n = scored.len() as f64;
    let mx = scored.iter().map(|s| s.0).sum::<f64>() / n;
    let my = scored.iter().filter(|s| s.1).count() as f64 / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, l) in scored {
        let (dx, dy) = (x - mx, if l { 1.0 } else { 0.0 } - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_annotation, Report};
    use crate::embed::testing::table_from;
    use crate::matcher::Provenance;
    use proptest::prelude::*;

    fn encoder_table() -> EmbeddingTable {
        table_from(&[
            ("low", vec![1.0, 0.0, 0.0]),
            ("lung", vec![0.0, 1.0, 0.0]),
            ("volumes", vec![0.0, 0.0, 1.0]),
        ])
    }

    #[test]
    fn embedding_is_a_mean() {
        let table = encoder_table();
        let enc = SentenceEncoder::new(&table, 0.5);
        assert_eq!(enc.embed(&["lung"]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(
            enc.embed(&["lung", "lung"]).unwrap(),
            enc.embed(&["lung"]).unwrap()
        );
        assert_eq!(
            enc.embed(&["low", "lung", "volumes"]).unwrap(),
            enc.embed(&["volumes", "low", "lung"]).unwrap()
        );
        assert_eq!(enc.embed(&["lung"]).unwrap().len(), table.dim());
        assert!(matches!(
            enc.embed::<&str>(&[]),
            Err(EmbedError::EmptySentence)
        ));
    }

    #[test]
    fn separable_scores_calibrate_perfectly() {
        let scored = [
            (0.95, true),
            (0.9, true),
            (0.05, false),
            (0.1, false),
            (0.0, false),
        ];
        let c = best_threshold(&scored).unwrap();
        assert_eq!(c.accuracy, 1.0);
        assert!(c.threshold > 0.1 && c.threshold < 0.9);
        assert!((c.threshold - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inseparable_tie_prefers_larger_threshold() {
        let c = best_threshold(&[(0.5, true), (0.5, false)]).unwrap();
        assert_eq!(c.accuracy, 0.5);
        assert_eq!(c.threshold, 0.5);
        assert_eq!(best_threshold(&[(0.5, true), (0.5, false)]).unwrap(), c);
    }

    #[test]
    fn correlation_with_labels() {
        let c = best_threshold(&[(0.0, false), (1.0, true)]).unwrap();
        assert!((c.correlation - 1.0).abs() < 1e-12);
        // symmetric around the positive: uncorrelated
        let c = best_threshold(&[(0.2, false), (0.4, true), (0.6, false)]).unwrap();
        assert!(c.correlation.abs() < 1e-12);
        let c = best_threshold(&[(0.5, true), (0.5, false)]).unwrap();
        assert_eq!(c.correlation, 0.0);
    }

    #[test]
    fn degenerate_labels() {
        assert!(matches!(
            best_threshold(&[(0.1, true), (0.2, true)]),
            Err(EmbedError::DegenerateLabels)
        ));
    }

    #[test]
    fn encoder_pairs_from_manual_matches() {
        let report = Report {
            id: "r".into(),
            comparison: None,
            indication: None,
            findings_text: Some(
                "There is no pneumothorax or pleural effusion. Low lung volumes. No acute disease."
                    .into(),
            ),
            impression_text: None,
            annotations: vec![
                parse_annotation("Lung/hypoinflation").unwrap(),
                parse_annotation("Opacity/lung/base/left/mild").unwrap(),
                parse_annotation("Lung/hyperdistention").unwrap(),
            ],
            is_normal: false,
        };
        let manual = vec![MatchedPair {
            report_id: "r".into(),
            annotation_index: 0,
            sentence_index: 1,
            label: 1,
            provenance: Provenance::Manual,
        }];
        let pairs = make_encoder_pairs(&[report.clone()], &manual, 5);
        let positives: Vec<_> = pairs.iter().filter(|p| p.label == 1).collect();
        assert_eq!(positives.len(), 1);
        assert_eq!(positives[0].sentence, "Low lung volumes.");
        assert_eq!(positives[0].annotation, "lung hypoinflation");
        let negatives: Vec<_> = pairs.iter().filter(|p| p.label == 0).collect();
        assert_eq!(negatives.len(), 2);
        assert!(negatives
            .iter()
            .all(|p| !(p.annotation_index == 0 && p.sentence_index == 1)));
        assert_eq!(make_encoder_pairs(&[report], &manual, 5), pairs);
    }

    proptest! {
        #[test]
        fn calibration_beats_trivial_classifiers(
            scored in proptest::collection::vec((-1.0f64..1.0, any::<bool>()), 2..40)
        ) {
            prop_assume!(scored.iter().any(|s| s.1) && scored.iter().any(|s| !s.1));
            let c = best_threshold(&scored).unwrap();
            let n = scored.len() as f64;
            let pos = scored.iter().filter(|s| s.1).count() as f64;
            prop_assert!(c.accuracy + 1e-12 >= pos / n);
            prop_assert!(c.accuracy + 1e-12 >= (n - pos) / n);
            let realized = scored.iter().filter(|(s, l)| (*s > c.threshold) == *l).count() as f64 / n;
            prop_assert!((realized - c.accuracy).abs() < 1e-12);
        }
    }
}
