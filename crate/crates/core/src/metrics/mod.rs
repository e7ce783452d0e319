//! Generation metrics over annotation token sequences: corpus BLEU-N with a
//! minimum reference length per order, ROUGE-L F1 and METEOR (exact and
//! Porter-stem stages).

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::{porter_stem, word_ngrams};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no pair has a reference of at least {0} tokens")]
    NoEligiblePairs(usize),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Candidate and reference token sequences, lowercase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub candidate: Vec<String>,
    pub reference: Vec<String>,
}

impl EvalPair {
    pub fn new<A: AsRef<str>, B: AsRef<str>>(candidate: &[A], reference: &[B]) -> Self {
        let norm = |s: &str| s.trim().to_lowercase();
        Self {
            candidate: candidate
                .iter()
                .map(|t| norm(t.as_ref()))
                .filter(|t| !t.is_empty())
                .collect(),
            reference: reference
                .iter()
                .map(|t| norm(t.as_ref()))
                .filter(|t| !t.is_empty())
                .collect(),
        }
    }

    /// Scores annotation lists: separators dropped and annotations concatenated.
    pub fn from_annotations<A: AsRef<str>, B: AsRef<str>>(
        candidate: &[A],
        reference: &[B],
    ) -> Self {
        Self::new(&annotation_tokens(candidate), &annotation_tokens(reference))
    }
}

/// Tokens of "/"-joined annotations, in order, without the separators.
pub fn annotation_tokens<S: AsRef<str>>(annotations: &[S]) -> Vec<String> {
    annotations
        .iter()
        .flat_map(|a| {
            a.as_ref()
                .split(|c: char| c == '/' || c.is_whitespace())
                .filter(|t| !t.is_empty() && *t != "<sep>")
                .map(str::to_lowercase)
                .collect::<Vec<_>>()
        })
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for g in word_ngrams(tokens, n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Corpus BLEU with uniform weights over orders 1..=n, no smoothing. Pairs
/// whose reference is shorter than `n` tokens are left out.
pub fn bleu_n(pairs: &[EvalPair], n: usize) -> Result<f64> {
    let eligible: Vec<&EvalPair> = pairs
        .iter()
        .filter(|p| p.reference.len() >= n.max(1))
        .collect();
    if eligible.is_empty() || n == 0 {
        return Err(MetricError::NoEligiblePairs(n));
    }
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for p in &eligible {
        cand_len += p.candidate.len();
        ref_len += p.reference.len();
        for k in 1..=n {
            let refs = ngram_counts(&p.reference, k);
            for (g, c) in ngram_counts(&p.candidate, k) {
                matched[k - 1] += c.min(refs.get(&g).copied().unwrap_or(0));
            }
            total[k - 1] += p.candidate.len().saturating_sub(k - 1);
        }
    }
    Ok(combine_bleu(&matched, &total, cand_len, ref_len))
}

fn combine_bleu(matched: &[usize], total: &[usize], cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 || matched.iter().zip(total).any(|(&m, &t)| m == 0 || t == 0) {
        return 0.0;
    }
    let n = matched.len() as f64;
    let log_p: f64 = matched
        .iter()
        .zip(total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / n;
    let bp = if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    bp * log_p.exp()
}

/// Single-pair BLEU with add-one smoothing on every order. A debugging aid
/// only; reported scores use [`bleu_n`].
pub fn sentence_bleu_add_one(pair: &EvalPair, n: usize) -> f64 {
    if pair.candidate.is_empty() || n == 0 {
        return 0.0;
    }
    let mut log_p = 0.0;
    for k in 1..=n {
        let refs = ngram_counts(&pair.reference, k);
        let m: usize = ngram_counts(&pair.candidate, k)
            .into_iter()
            .map(|(g, c)| c.min(refs.get(&g).copied().unwrap_or(0)))
            .sum();
        let t = pair.candidate.len().saturating_sub(k - 1);
        log_p += ((m + 1) as f64 / (t + 1) as f64).ln();
    }
    let (c, r) = (pair.candidate.len() as f64, pair.reference.len() as f64);
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_p / n as f64).exp()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1.
pub fn rouge_l_f1(pair: &EvalPair) -> f64 {
    let lcs = lcs_len(&pair.candidate, &pair.reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / pair.candidate.len() as f64;
    let r = lcs as f64 / pair.reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Alignment statistics behind a METEOR score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorDetail {
    pub matches: usize,
    pub chunks: usize,
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub penalty: f64,
    pub score: f64,
}

const ALIGN_BUDGET: usize = 200_000;

/// Picks, among candidate positions still free, an alignment to free
/// reference positions with equal keys that has the most links and, among
/// those, the fewest chunks counted together with `fixed`.
struct Aligner<'a> {
    cand_keys: &'a [String],
    ref_keys: &'a [String],
    cand_free: Vec<bool>,
    ref_free: Vec<bool>,
    fixed: &'a [(usize, usize)],
    current: Vec<(usize, usize)>,
    best: Option<(usize, usize, Vec<(usize, usize)>)>,
    visited: usize,
}

fn count_chunks(links: &[(usize, usize)]) -> usize {
    let mut sorted = links.to_vec();
    sorted.sort_unstable();
    let mut chunks = 0;
    for (k, &(c, r)) in sorted.iter().enumerate() {
        let continues = k > 0 && {
            let (pc, pr) = sorted[k - 1];
            c == pc + 1 && r == pr + 1
        };
        if !continues {
            chunks += 1;
        }
    }
    chunks
}

impl Aligner<'_> {
    fn upper_bound(&self, from: usize) -> usize {
        let mut cand: HashMap<&str, usize> = HashMap::new();
        for i in from..self.cand_keys.len() {
            if self.cand_free[i] {
                *cand.entry(self.cand_keys[i].as_str()).or_default() += 1;
            }
        }
        let mut refs: HashMap<&str, usize> = HashMap::new();
        for (j, k) in self.ref_keys.iter().enumerate() {
            if self.ref_free[j] {
                *refs.entry(k.as_str()).or_default() += 1;
            }
        }
        cand.iter()
            .map(|(k, c)| (*c).min(refs.get(k).copied().unwrap_or(0)))
            .sum()
    }

    fn search(&mut self, i: usize) {
        self.visited += 1;
        if i == self.cand_keys.len() {
            let mut all = self.fixed.to_vec();
            all.extend(&self.current);
            let (m, ch) = (self.current.len(), count_chunks(&all));
            let better = match &self.best {
                None => true,
                Some((bm, bc, _)) => m > *bm || (m == *bm && ch < *bc),
            };
            if better {
                self.best = Some((m, ch, self.current.clone()));
            }
            return;
        }
        if self.visited > ALIGN_BUDGET && self.best.is_some() {
            return;
        }
        if let Some((bm, _, _)) = &self.best {
            if self.current.len() + self.upper_bound(i) < *bm {
                return;
            }
        }
        if self.cand_free[i] {
            for j in 0..self.ref_keys.len() {
                if self.ref_free[j] && self.ref_keys[j] == self.cand_keys[i] {
                    self.ref_free[j] = false;
                    self.current.push((i, j));
                    self.search(i + 1);
                    self.current.pop();
                    self.ref_free[j] = true;
                }
            }
        }
        self.search(i + 1);
    }
}

fn align_stage(
    cand_keys: &[String],
    ref_keys: &[String],
    cand_free: Vec<bool>,
    ref_free: Vec<bool>,
    fixed: &[(usize, usize)],
) -> Vec<(usize, usize)> {
    let mut a = Aligner {
        cand_keys,
        ref_keys,
        cand_free,
        ref_free,
        fixed,
        current: Vec::new(),
        best: None,
        visited: 0,
    };
    a.search(0);
    a.best.map(|b| b.2).unwrap_or_default()
}

pub fn meteor_detail(pair: &EvalPair) -> MeteorDetail {
    let (c, r) = (&pair.candidate, &pair.reference);
    let mut links = align_stage(c, r, vec![true; c.len()], vec![true; r.len()], &[]);
    let mut cand_free = vec![true; c.len()];
    let mut ref_free = vec![true; r.len()];
    for &(i, j) in &links {
        cand_free[i] = false;
        ref_free[j] = false;
    }
    let cs: Vec<String> = c.iter().map(|t| porter_stem(t)).collect();
    let rs: Vec<String> = r.iter().map(|t| porter_stem(t)).collect();
    let stem_links = align_stage(&cs, &rs, cand_free, ref_free, &links);
    links.extend(stem_links);

    let m = links.len();
    if m == 0 {
        return MeteorDetail {
            matches: 0,
            chunks: 0,
            precision: 0.0,
            recall: 0.0,
            fmean: 0.0,
            penalty: 0.0,
            score: 0.0,
        };
    }
    let chunks = count_chunks(&links);
    let precision = m as f64 / c.len() as f64;
    let recall = m as f64 / r.len() as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    MeteorDetail {
        matches: m,
        chunks,
        precision,
        recall,
        fmean,
        penalty,
        score: fmean * (1.0 - penalty),
    }
}

pub fn meteor(pair: &EvalPair) -> f64 {
    meteor_detail(pair).score
}

/// Arithmetic mean; 0 for no scores.
pub fn aggregate(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// BLEU-1..4, METEOR and ROUGE-L over a set of pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub label: String,
    pub pairs: usize,
    /// `None` when no reference is long enough for that order.
    pub bleu: [Option<f64>; 4],
    pub meteor: f64,
    pub rouge_l: f64,
}

/// Scores all pairs with a non-empty reference.
pub fn evaluate(label: &str, pairs: &[EvalPair]) -> EvaluationReport {
    let pairs: Vec<EvalPair> = pairs
        .iter()
        .filter(|p| !p.reference.is_empty())
        .cloned()
        .collect();
    let mut bleu = [None; 4];
    for (n, slot) in bleu.iter_mut().enumerate() {
        *slot = bleu_n(&pairs, n + 1).ok();
    }
    EvaluationReport {
        label: label.to_string(),
        pairs: pairs.len(),
        bleu,
        meteor: aggregate(&pairs.iter().map(meteor).collect::<Vec<_>>()),
        rouge_l: aggregate(&pairs.iter().map(rouge_l_f1).collect::<Vec<_>>()),
    }
}

impl EvaluationReport {
    fn cells(&self) -> Vec<String> {
        let mut cells: Vec<String> = self
            .bleu
            .iter()
            .map(|b| b.map_or("n/a".to_string(), |v| format!("{v:.4}")))
            .collect();
        cells.push(format!("{:.4}", self.meteor));
        cells.push(format!("{:.4}", self.rouge_l));
        cells
    }

    /// Aligned table rows for several reports, then key=value lines.
    pub fn render_all(reports: &[EvaluationReport]) -> String {
        let mut out = String::new();
        let width = reports
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let _ = write!(out, "{:<width$} {:>7}", "level", "pairs");
        for h in ["BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "METEOR", "ROUGE-L"] {
            let _ = write!(out, " {h:>8}");
        }
        out.push('\n');
        for r in reports {
            let _ = write!(out, "{:<width$} {:>7}", r.label, r.pairs);
            for c in r.cells() {
                let _ = write!(out, " {c:>8}");
            }
            out.push('\n');
        }
        out.push('\n');
        for r in reports {
            let keys = ["bleu1", "bleu2", "bleu3", "bleu4", "meteor", "rouge_l"];
            let _ = writeln!(out, "{}.pairs={}", r.label, r.pairs);
            for (k, v) in keys.iter().zip(r.cells()) {
                let _ = writeln!(out, "{}.{k}={v}", r.label);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(c: &str, r: &str) -> EvalPair {
        EvalPair::new(
            &c.split_whitespace().collect::<Vec<_>>(),
            &r.split_whitespace().collect::<Vec<_>>(),
        )
    }

    #[test]
    fn bleu_examples() {
        let same = p("calcinosis lung hilum", "calcinosis lung hilum");
        assert_eq!(bleu_n(&[same.clone()], 3).unwrap(), 1.0);
        let short = p("calcinosis lung hilum", "calcinosis lung hilum lymph nodes");
        let b1 = bleu_n(&[short.clone()], 1).unwrap();
        assert!((b1 - (1.0f64 - 5.0 / 3.0).exp()).abs() < 1e-12);
        assert!((b1 - 0.51342).abs() < 1e-5);
        assert_eq!(bleu_n(&[p("x", "x")], 1).unwrap(), 1.0);

        // A two-token reference is ignored by BLEU-3.
        let two = p("opacity", "opacity lung");
        assert_eq!(bleu_n(&[same.clone(), two.clone()], 3).unwrap(), 1.0);
        assert!(bleu_n(&[same, two.clone()], 2).unwrap() < 1.0);
        assert_eq!(bleu_n(&[two], 3), Err(MetricError::NoEligiblePairs(3)));
    }

    #[test]
    fn bleu_clips_repeated_ngrams() {
        // Candidate repeats a word the reference has once: precision 1/3.
        let b = bleu_n(&[p("lung lung lung", "lung base left")], 1).unwrap();
        assert!((b - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn smoothed_bleu_is_positive_without_matches() {
        let s = sentence_bleu_add_one(&p("a b", "c d"), 2);
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l_f1(&p("a b c", "a b c")), 1.0);
        let r = rouge_l_f1(&p("lung hypoinflation", "low lung volumes"));
        assert!((r - 0.4).abs() < 1e-12);
        assert_eq!(rouge_l_f1(&p("heart", "lung")), 0.0);
    }

    #[test]
    fn meteor_examples() {
        let d = meteor_detail(&p("a b c d", "a b c d"));
        assert_eq!((d.matches, d.chunks), (4, 1));
        assert!((d.score - 0.9921875).abs() < 1e-12);
        assert_eq!(meteor(&p("heart", "lung")), 0.0);
        let s = meteor_detail(&p("scarring", "scar"));
        assert_eq!((s.matches, s.chunks), (1, 1));
        assert!((s.score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn meteor_prefers_fewer_chunks() {
        // "the" could align to either reference occurrence; the adjacent one
        // keeps everything in one chunk.
        let d = meteor_detail(&p("the lung", "the heart the lung"));
        assert_eq!(d.matches, 2);
        assert_eq!(d.chunks, 1);
    }

    #[test]
    fn meteor_hand_computed_reordering() {
        // matches 3, chunks 2 ("b c" then "a"), P = R = 1.
        let d = meteor_detail(&p("b c a", "a b c"));
        assert_eq!((d.matches, d.chunks), (3, 2));
        let expected = 1.0 - 0.5 * (2.0f64 / 3.0).powi(3);
        assert!((d.score - expected).abs() < 1e-12);
    }

    #[test]
    fn aggregation() {
        assert_eq!(aggregate(&[0.7]), 0.7);
        assert_eq!(aggregate(&[1.0, 1.0]), 1.0);
        assert_eq!(aggregate(&[0.4, 0.6]), 0.5);
    }

    #[test]
    fn annotation_rendering_drops_separators() {
        let pair = EvalPair::from_annotations(
            &["Cardiomegaly/severe"],
            &["cardiomegaly/mild", "Lung/hypoinflation"],
        );
        assert_eq!(pair.candidate, ["cardiomegaly", "severe"]);
        assert_eq!(
            pair.reference,
            ["cardiomegaly", "mild", "lung", "hypoinflation"]
        );
    }

    #[test]
    fn report_table() {
        let r = evaluate("report", &[p("a b", "a b"), p("c", "")]);
        assert_eq!(r.pairs, 1);
        assert_eq!(r.bleu[0], Some(1.0));
        assert_eq!(r.bleu[2], None);
        let text = EvaluationReport::render_all(&[r]);
        assert!(text.contains("report.bleu3=n/a"));
        assert!(text.contains("BLEU-4"));
    }

    fn tokens() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(prop_oneof!["a", "b", "c", "lung", "lungs"], 1..7)
    }

    proptest! {
        #[test]
        fn scores_in_unit_interval(c in tokens(), r in tokens()) {
            let pair = EvalPair { candidate: c, reference: r };
            for s in [rouge_l_f1(&pair), meteor(&pair), bleu_n(&[pair.clone()], 1).unwrap()] {
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }

        #[test]
        fn identical_sequences(c in tokens()) {
            let pair = EvalPair { candidate: c.clone(), reference: c.clone() };
            prop_assert_eq!(rouge_l_f1(&pair), 1.0);
            prop_assert_eq!(bleu_n(&[pair.clone()], 1).unwrap(), 1.0);
            let m = c.len() as f64;
            prop_assert!((meteor(&pair) - (1.0 - 0.5 / (m * m * m))).abs() < 1e-12);
        }

        #[test]
        fn rouge_symmetric_for_equal_lengths(
            (c, r) in (1usize..7).prop_flat_map(|n| (
                proptest::collection::vec(prop_oneof!["a", "b", "c"], n),
                proptest::collection::vec(prop_oneof!["a", "b", "c"], n),
            ))
        ) {
            let a = rouge_l_f1(&EvalPair { candidate: c.clone(), reference: r.clone() });
            let b = rouge_l_f1(&EvalPair { candidate: r, reference: c });
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn case_and_whitespace_do_not_matter(c in tokens(), r in tokens()) {
            let upper: Vec<String> = c.iter().map(|t| format!("{} ", t.to_uppercase())).collect();
            let a = EvalPair::new(&c, &r);
            let b = EvalPair::new(&upper, &r);
            prop_assert_eq!(meteor(&a), meteor(&b));
            prop_assert_eq!(rouge_l_f1(&a), rouge_l_f1(&b));
        }
    }
}
