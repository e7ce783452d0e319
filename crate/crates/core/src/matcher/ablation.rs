use std::fmt::Write as _;

use super::{
    evaluate_matching, random_baseline, Branch, CorpusMatches, MatchAccuracy, MatchedPair, Matcher,
    MatcherConfig, Result, SynonymDict,
};
use crate::corpus::Report;
use crate::embed::{EmbeddingTable, SentenceEncoder};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: &'static str,
    pub accuracy: MatchAccuracy,
}

/// Matching accuracy of each method plus per-branch usage of the full method.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// For each branch of the full method: (annotations resolved there, correct).
    pub branches: Vec<(Branch, usize, usize)>,
}

impl AblationTable {
    pub fn accuracy(&self, name: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.name == name)
            .map(|r| r.accuracy.accuracy())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<34} {:>8}", "method", "accuracy");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<34} {:>8.4}  ({}/{})",
                r.name,
                r.accuracy.accuracy(),
                r.accuracy.correct,
                r.accuracy.total
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<34} {:>8} {:>8}", "branch", "count", "accuracy");
        for (b, n, c) in &self.branches {
            let acc = if *n == 0 { 0.0 } else { *c as f64 / *n as f64 };
            let _ = writeln!(out, "{:<34} {:>8} {:>8.4}", b.name(), n, acc);
        }
        out
    }
}

pub const ABLATION_METHODS: [(&str, Option<fn() -> MatcherConfig>); 7] = [
    ("baseline (random)", None),
    ("n-gram", Some(MatcherConfig::ngram_only)),
    ("k-most-similar", Some(MatcherConfig::ngram_neighbors)),
    ("n-gram + synonyms", Some(MatcherConfig::ngram_synonyms)),
    (
        "k-most-similar + synonyms",
        Some(MatcherConfig::ngram_neighbors_synonyms),
    ),
    ("rule-based", Some(MatcherConfig::full_rule)),
    (
        "rule-based + sentence encoder",
        Some(MatcherConfig::rule_encoder),
    ),
];

/// Runs every matching method, scoring each against `ground_truth`; `k` is
/// the neighbourhood size of the methods that use embeddings.
pub fn run_ablation(
    reports: &[Report],
    dict: &SynonymDict,
    table: Option<&EmbeddingTable>,
    encoder: Option<&SentenceEncoder<'_>>,
    ground_truth: &[MatchedPair],
    seed: u64,
    k: usize,
) -> Result<AblationTable> {
    let mut rows = Vec::new();
    let mut full: Option<CorpusMatches> = None;
    for (name, config) in ABLATION_METHODS {
        let predicted = match config {
            None => reports
                .iter()
                .flat_map(|r| random_baseline(r, seed))
                .collect(),
            Some(make) => {
                let config = MatcherConfig { k, ..make() };
                let m = Matcher::new(dict, table, encoder, config).match_corpus(reports);
                let pairs = m.pairs.clone();
                if config.use_encoder_fallback {
                    full = Some(m);
                }
                pairs
            }
        };
        rows.push(AblationRow {
            name,
            accuracy: evaluate_matching(&predicted, ground_truth)?,
        });
    }

    let full = full.expect("rule_encoder is among the methods");
    let truth: std::collections::HashMap<(&str, usize), usize> = ground_truth
        .iter()
        .filter(|m| m.label == 1)
        .map(|m| ((m.report_id.as_str(), m.annotation_index), m.sentence_index))
        .collect();
    let predicted: std::collections::HashMap<(&str, usize), usize> = full
        .pairs
        .iter()
        .map(|m| ((m.report_id.as_str(), m.annotation_index), m.sentence_index))
        .collect();
    let branches = Branch::ALL
        .iter()
        .map(|&b| {
            let resolved: Vec<_> = full
                .branches
                .iter()
                .filter(|(id, ai, br)| *br == b && truth.contains_key(&(id.as_str(), *ai)))
                .collect();
            let correct = resolved
                .iter()
                .filter(|(id, ai, _)| {
                    let key = (id.as_str(), *ai);
                    predicted.contains_key(&key) && predicted.get(&key) == truth.get(&key)
                })
                .count();
            (b, resolved.len(), correct)
        })
        .collect();
    Ok(AblationTable { rows, branches })
}
