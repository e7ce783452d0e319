//! Weak supervision: assign every annotation of a report to the sentence it
//! describes.
//!
//! For each annotation the heading is expanded into candidate words (its
//! word n-grams, Porter stems, dictionary synonyms and embedding neighbours)
//! and the sentences containing the most distinct candidates form the
//! shortlist. A unique winner is taken directly; a heading-only annotation
//! takes the earliest winner; otherwise the subheadings (n-grams and synonyms
//! only) break the tie. When no sentence contains any candidate, the sentence
//! encoder picks the most similar sentence if it clears the calibrated
//! threshold.

mod ablation;
mod io;

pub use ablation::{run_ablation, AblationRow, AblationTable};
pub use io::{
    parse_dictionary, parse_matches, read_dictionary, read_matches, write_dictionary, write_matches,
};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Annotation, Report, Sentence};
use crate::embed::{EmbeddingTable, SentenceEncoder, DEFAULT_K};
use crate::textproc::{all_word_ngrams, contains_sequence, porter_stem, tokenize_str};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("no ground truth for report {report_id:?} annotation {annotation_index}")]
    MissingGroundTruth {
        report_id: String,
        annotation_index: usize,
    },
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MatchError> = std::result::Result<T, E>;

/// Symmetric term/synonym dictionary. Keys are normalized to lowercase
/// space-joined tokens.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymDict {
    entries: HashMap<String, Vec<String>>,
}

fn normalize_phrase(s: &str) -> String {
    tokenize_str(s).join(" ")
}

impl SynonymDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, term: &str, synonym: &str) {
        let (a, b) = (normalize_phrase(term), normalize_phrase(synonym));
        if a.is_empty() || b.is_empty() || a == b {
            return;
        }
        for (k, v) in [(&a, &b), (&b, &a)] {
            let list = self.entries.entry(k.clone()).or_default();
            if !list.contains(v) {
                list.push(v.clone());
            }
        }
    }

    pub fn synonyms(&self, phrase: &str) -> &[String] {
        self.entries
            .get(&normalize_phrase(phrase))
            .map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Each unordered pair once, sorted.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .entries
            .iter()
            .flat_map(|(k, vs)| {
                vs.iter()
                    .filter(move |v| k < *v)
                    .map(move |v| (k.clone(), v.clone()))
            })
            .collect();
        out.sort();
        out
    }
}

impl<A: AsRef<str>, B: AsRef<str>> FromIterator<(A, B)> for SynonymDict {
    fn from_iter<I: IntoIterator<Item = (A, B)>>(iter: I) -> Self {
        let mut d = SynonymDict::new();
        for (a, b) in iter {
            d.insert(a.as_ref(), b.as_ref());
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CandidateSource {
    Ngram,
    Stem,
    Synonym,
    Neighbor,
}

/// Candidate words with the source that first produced each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateWordSet {
    pub words: BTreeMap<String, CandidateSource>,
    /// Words also added as stems, even if another source listed them first.
    stems: BTreeSet<String>,
}

impl CandidateWordSet {
    fn add(&mut self, word: String, source: CandidateSource) {
        if !word.is_empty() {
            if source == CandidateSource::Stem {
                self.stems.insert(word.clone());
            }
            self.words.entry(word).or_insert(source);
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains_key(word)
    }

    /// Number of distinct candidates found in a sentence. Stems match any
    /// sentence token with the same stem; everything else must occur as a
    /// contiguous token run.
    pub fn count_in(&self, tokens: &[String], stems: &[String]) -> usize {
        self.words
            .iter()
            .filter(|(word, _)| {
                let parts: Vec<&str> = word.split(' ').collect();
                contains_sequence(tokens, &parts)
                    || (self.stems.contains(*word) && stems.iter().any(|s| s == *word))
            })
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub use_ngrams: bool,
    pub use_stems: bool,
    pub use_synonyms: bool,
    pub use_neighbors: bool,
    pub use_encoder_fallback: bool,
    pub k: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self::rule_encoder()
    }
}

impl MatcherConfig {
    const NONE: Self = Self {
        use_ngrams: false,
        use_stems: false,
        use_synonyms: false,
        use_neighbors: false,
        use_encoder_fallback: false,
        k: DEFAULT_K,
    };

    pub fn ngram_only() -> Self {
        Self {
            use_ngrams: true,
            ..Self::NONE
        }
    }

    pub fn ngram_neighbors() -> Self {
        Self {
            use_neighbors: true,
            ..Self::ngram_only()
        }
    }

    pub fn ngram_synonyms() -> Self {
        Self {
            use_synonyms: true,
            ..Self::ngram_only()
        }
    }

    pub fn ngram_neighbors_synonyms() -> Self {
        Self {
            use_synonyms: true,
            ..Self::ngram_neighbors()
        }
    }

    pub fn full_rule() -> Self {
        Self {
            use_ngrams: true,
            use_stems: true,
            use_synonyms: true,
            use_neighbors: true,
            ..Self::NONE
        }
    }

    pub fn rule_encoder() -> Self {
        Self {
            use_encoder_fallback: true,
            ..Self::full_rule()
        }
    }

    pub fn any_candidate_source(&self) -> bool {
        self.use_ngrams || self.use_stems || self.use_synonyms || self.use_neighbors
    }

    fn subheading_sources(&self) -> Self {
        Self {
            use_stems: false,
            use_neighbors: false,
            ..*self
        }
    }
}

/// Expands terms into candidate words from the sources `config` enables.
pub fn candidate_words<S: AsRef<str>>(
    terms: &[S],
    dict: &SynonymDict,
    table: Option<&EmbeddingTable>,
    config: &MatcherConfig,
) -> CandidateWordSet {
    let mut set = CandidateWordSet::default();
    for term in terms {
        let words = tokenize_str(term.as_ref());
        if words.is_empty() {
            continue;
        }
        let grams = all_word_ngrams(&words);
        if config.use_ngrams {
            for g in &grams {
                set.add(g.clone(), CandidateSource::Ngram);
            }
        }
        if config.use_stems {
            for w in &words {
                set.add(porter_stem(w), CandidateSource::Stem);
            }
        }
        if config.use_synonyms {
            for g in &grams {
                for syn in dict.synonyms(g) {
                    set.add(syn.clone(), CandidateSource::Synonym);
                }
            }
        }
        if config.use_neighbors {
            if let Some(table) = table {
                for w in &words {
                    for (n, _) in table.most_similar(w, config.k) {
                        set.add(n, CandidateSource::Neighbor);
                    }
                }
            }
        }
    }
    set
}

/// Candidate words for subheadings: n-grams and synonyms only.
pub fn subheading_words<S: AsRef<str>>(
    terms: &[S],
    dict: &SynonymDict,
    config: &MatcherConfig,
) -> CandidateWordSet {
    candidate_words(terms, dict, None, &config.subheading_sources())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Manual,
    Rule,
    Encoder,
    Random,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Manual => "manual",
            Provenance::Rule => "rule",
            Provenance::Encoder => "encoder",
            Provenance::Random => "random",
        })
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "manual" => Ok(Provenance::Manual),
            "rule" => Ok(Provenance::Rule),
            "encoder" => Ok(Provenance::Encoder),
            "random" | "random-baseline" => Ok(Provenance::Random),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

/// A sentence/annotation assignment within one report.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchedPair {
    pub report_id: String,
    pub annotation_index: usize,
    pub sentence_index: usize,
    pub label: u8,
    pub provenance: Provenance,
}

/// Which rule resolved an annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    /// One sentence holds the most heading candidates.
    Unique,
    /// Several tie and the annotation has no subheadings: earliest wins.
    HeadingOnly,
    /// Several tie and subheading candidates decide.
    Subheadings,
    /// No sentence holds a heading candidate; the encoder decided.
    Encoder,
    /// Nothing matched, or the encoder was unavailable or not confident.
    Unmatched,
}

impl Branch {
    pub const ALL: [Branch; 5] = [
        Branch::Unique,
        Branch::HeadingOnly,
        Branch::Subheadings,
        Branch::Encoder,
        Branch::Unmatched,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Branch::Unique => "first (unique sentence)",
            Branch::HeadingOnly => "second (heading only)",
            Branch::Subheadings => "third (subheadings)",
            Branch::Encoder => "fourth (encoder)",
            Branch::Unmatched => "unmatched",
        }
    }
}

/// Matches and per-annotation branch outcomes for one report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportMatches {
    pub pairs: Vec<MatchedPair>,
    pub branches: Vec<Branch>,
}

/// Matching context shared across reports.
#[derive(Debug, Clone, Copy)]
pub struct Matcher<'a> {
    pub dict: &'a SynonymDict,
    pub table: Option<&'a EmbeddingTable>,
    pub encoder: Option<&'a SentenceEncoder<'a>>,
    pub config: MatcherConfig,
}

impl<'a> Matcher<'a> {
    pub fn new(
        dict: &'a SynonymDict,
        table: Option<&'a EmbeddingTable>,
        encoder: Option<&'a SentenceEncoder<'a>>,
        config: MatcherConfig,
    ) -> Self {
        Self {
            dict,
            table,
            encoder,
            config,
        }
    }

    /// Assigns each annotation of `report` to at most one sentence.
    pub fn match_report(&self, report: &Report) -> ReportMatches {
        let sentences = report.sentences().unwrap_or_default();
        self.match_sentences(report, &sentences)
    }

    pub fn match_sentences(&self, report: &Report, sentences: &[Sentence]) -> ReportMatches {
        let stems: Vec<Vec<String>> = sentences
            .iter()
            .map(|s| s.tokens.iter().map(|t| porter_stem(t)).collect())
            .collect();
        let mut out = ReportMatches::default();
        for (ai, ann) in report.annotations.iter().enumerate() {
            let (chosen, branch) = self.resolve(ann, sentences, &stems);
            if let Some(si) = chosen {
                out.pairs.push(MatchedPair {
                    report_id: report.id.clone(),
                    annotation_index: ai,
                    sentence_index: si,
                    label: 1,
                    provenance: if branch == Branch::Encoder {
                        Provenance::Encoder
                    } else {
                        Provenance::Rule
                    },
                });
            }
            out.branches.push(branch);
        }
        out
    }

    fn resolve(
        &self,
        ann: &Annotation,
        sentences: &[Sentence],
        stems: &[Vec<String>],
    ) -> (Option<usize>, Branch) {
        let h_words = candidate_words(&[ann.heading.as_str()], self.dict, self.table, &self.config);
        let counts: Vec<usize> = sentences
            .iter()
            .zip(stems)
            .map(|(s, st)| h_words.count_in(&s.tokens, st))
            .collect();
        let best = counts.iter().copied().max().unwrap_or(0);
        let shortlist: Vec<usize> = if best > 0 {
            (0..sentences.len())
                .filter(|&i| counts[i] == best)
                .collect()
        } else {
            Vec::new()
        };

        if shortlist.len() == 1 {
            return (Some(shortlist[0]), Branch::Unique);
        }
        if !shortlist.is_empty() && ann.subheadings.is_empty() {
            return (Some(shortlist[0]), Branch::HeadingOnly);
        }
        if shortlist.len() > 1 {
            let sh_words = subheading_words(&ann.subheadings, self.dict, &self.config);
            let pick = shortlist
                .iter()
                .copied()
                .max_by(|&a, &b| {
                    let ca = sh_words.count_in(&sentences[a].tokens, &stems[a]);
                    let cb = sh_words.count_in(&sentences[b].tokens, &stems[b]);
                    // max_by keeps the last maximum; reverse index order so ties go early.
                    ca.cmp(&cb).then(b.cmp(&a))
                })
                .expect("non-empty shortlist");
            return (Some(pick), Branch::Subheadings);
        }
        if self.config.use_encoder_fallback {
            if let Some(pick) = self.encoder_pick(ann, sentences) {
                return (Some(pick), Branch::Encoder);
            }
        }
        (None, Branch::Unmatched)
    }

    fn encoder_pick(&self, ann: &Annotation, sentences: &[Sentence]) -> Option<usize> {
        let encoder = self.encoder?;
        let target = ann.tokens();
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in sentences.iter().enumerate() {
            let Ok(sim) = encoder.similarity(&s.tokens, &target) else {
                continue;
            };
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((i, sim));
            }
        }
        best.filter(|&(_, sim)| encoder.accepts(sim))
            .map(|(i, _)| i)
    }

    /// Matches every report and tallies branch usage.
    pub fn match_corpus(&self, reports: &[Report]) -> CorpusMatches {
        let mut out = CorpusMatches::default();
        for report in reports {
            let m = self.match_report(report);
            for (ai, b) in m.branches.iter().enumerate() {
                *out.branch_counts.entry(*b).or_default() += 1;
                out.branches.push((report.id.clone(), ai, *b));
            }
            out.pairs.extend(m.pairs);
        }
        out
    }
}

/// Matches for a whole corpus with the branch that resolved each annotation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusMatches {
    pub pairs: Vec<MatchedPair>,
    pub branches: Vec<(String, usize, Branch)>,
    pub branch_counts: BTreeMap<Branch, usize>,
}

impl CorpusMatches {
    pub fn count(&self, branch: Branch) -> usize {
        self.branch_counts.get(&branch).copied().unwrap_or(0)
    }
}

/// One uniformly random sentence per annotation, seeded per report.
pub fn random_baseline(report: &Report, seed: u64) -> Vec<MatchedPair> {
    let n = report.sentences().map(|s| s.len()).unwrap_or(0);
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ id_hash(&report.id));
    (0..report.annotations.len())
        .map(|ai| MatchedPair {
            report_id: report.id.clone(),
            annotation_index: ai,
            sentence_index: rng.gen_range(0..n),
            label: 1,
            provenance: Provenance::Random,
        })
        .collect()
}

fn id_hash(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Accuracy of predicted matches against the ground-truth annotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchAccuracy {
    pub correct: usize,
    pub total: usize,
}

impl MatchAccuracy {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Fraction of ground-truth annotations whose predicted sentence agrees.
/// Missing predictions count as wrong. Predictions for a report covered by
/// the ground truth must refer to annotations the ground truth knows.
pub fn evaluate_matching(
    predicted: &[MatchedPair],
    ground_truth: &[MatchedPair],
) -> Result<MatchAccuracy> {
    let truth: HashMap<(&str, usize), usize> = ground_truth
        .iter()
        .filter(|m| m.label == 1)
        .map(|m| ((m.report_id.as_str(), m.annotation_index), m.sentence_index))
        .collect();
    if truth.is_empty() {
        return Err(MatchError::EmptyGroundTruth);
    }
    let covered: HashSet<&str> = truth.keys().map(|k| k.0).collect();
    let mut predictions: HashMap<(&str, usize), usize> = HashMap::new();
    for p in predicted.iter().filter(|p| p.label == 1) {
        let key = (p.report_id.as_str(), p.annotation_index);
        if covered.contains(key.0) && !truth.contains_key(&key) {
            return Err(MatchError::MissingGroundTruth {
                report_id: p.report_id.clone(),
                annotation_index: p.annotation_index,
            });
        }
        predictions.insert(key, p.sentence_index);
    }
    let correct = truth
        .iter()
        .filter(|(k, s)| predictions.get(*k) == Some(*s))
        .count();
    Ok(MatchAccuracy {
        correct,
        total: truth.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_annotation;
    use crate::embed::testing::table_from;

    fn report(findings: &str, anns: &[&str]) -> Report {
        Report {
            id: "r".into(),
            comparison: None,
            indication: None,
            findings_text: Some(findings.into()),
            impression_text: None,
            annotations: anns.iter().map(|a| parse_annotation(a).unwrap()).collect(),
            is_normal: false,
        }
    }

    fn dict() -> SynonymDict {
        [
            ("scarring", "cicatrix"),
            ("chronic obstructive", "copd"),
            ("low lung volumes", "hypoinflation"),
        ]
        .into_iter()
        .collect()
    }

    #[test]
    fn dictionary_is_symmetric() {
        let d = dict();
        assert_eq!(d.synonyms("cicatrix"), ["scarring"]);
        assert_eq!(d.synonyms("Scarring"), ["cicatrix"]);
        assert_eq!(d.synonyms("copd"), ["chronic obstructive"]);
        assert!(d.synonyms("lung").is_empty());
        assert_eq!(d.len(), 3);
        assert_eq!(d.pairs().len(), 3);
    }

    #[test]
    fn candidates_from_each_source() {
        let d = dict();
        let cfg = MatcherConfig::full_rule();
        assert!(candidate_words(&["cicatrix"], &d, None, &cfg).contains("scarring"));
        assert!(
            candidate_words(&["pulmonary disease, chronic obstructive"], &d, None, &cfg)
                .contains("copd")
        );

        let stems_only = MatcherConfig {
            use_stems: true,
            ..MatcherConfig::NONE
        };
        let set = candidate_words(&["scarring"], &d, None, &stems_only);
        assert_eq!(set.words.keys().collect::<Vec<_>>(), ["scar"]);
        let with_grams = MatcherConfig {
            use_ngrams: true,
            ..stems_only
        };
        let set = candidate_words(&["scarring"], &d, None, &with_grams);
        assert_eq!(set.words.keys().collect::<Vec<_>>(), ["scar", "scarring"]);
        assert_eq!(set.words["scar"], CandidateSource::Stem);
    }

    #[test]
    fn neighbours_come_from_the_table() {
        let table = table_from(&[
            ("nodule", vec![1.0, 0.0]),
            ("nodular", vec![0.9, 0.1]),
            ("heart", vec![0.0, 1.0]),
        ]);
        let cfg = MatcherConfig {
            k: 1,
            ..MatcherConfig::ngram_neighbors()
        };
        let set = candidate_words(&["nodule"], &SynonymDict::new(), Some(&table), &cfg);
        assert_eq!(set.words.get("nodular"), Some(&CandidateSource::Neighbor));
        assert!(!set.contains("heart"));
    }

    #[test]
    fn subheading_candidates_skip_stems_and_neighbours() {
        let set = subheading_words(&["upper lobes"], &dict(), &MatcherConfig::full_rule());
        assert!(set.contains("upper lobes") && set.contains("lobes"));
        assert!(!set.contains("lobe"));
    }

    #[test]
    fn stem_candidates_match_inflected_sentence_tokens() {
        let set = candidate_words(
            &["nodule"],
            &SynonymDict::new(),
            None,
            &MatcherConfig {
                use_stems: true,
                ..MatcherConfig::NONE
            },
        );
        let tokens = vec!["small".to_string(), "nodules".to_string()];
        let stems: Vec<String> = tokens.iter().map(|t| porter_stem(t)).collect();
        assert_eq!(set.count_in(&tokens, &stems), 1);
    }

    #[test]
    fn synonym_phrase_matches_table_one_pair() {
        let r = report(
            "There is no pneumothorax or pleural effusion. Low lung volumes. No acute disease.",
            &["Hypoinflation"],
        );
        let d = dict();
        let m = Matcher::new(&d, None, None, MatcherConfig::full_rule()).match_report(&r);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].sentence_index, 1);
        assert_eq!(m.pairs[0].provenance, Provenance::Rule);
        assert_eq!(m.branches, [Branch::Unique]);
    }

    #[test]
    fn branches_two_and_three() {
        let r = report(
            "Opacity in the right lung. Opacity in the left lung base. Cardiomegaly.",
            &["Opacity", "Opacity/lung/base/left"],
        );
        let d = SynonymDict::new();
        let m = Matcher::new(&d, None, None, MatcherConfig::full_rule()).match_report(&r);
        assert_eq!(m.branches, [Branch::HeadingOnly, Branch::Subheadings]);
        assert_eq!(m.pairs[0].sentence_index, 0);
        assert_eq!(m.pairs[1].sentence_index, 1);
    }

    #[test]
    fn subheading_ties_go_to_the_earliest_sentence() {
        let r = report("Opacity right. Opacity left.", &["Opacity/base"]);
        let d = SynonymDict::new();
        let m = Matcher::new(&d, None, None, MatcherConfig::full_rule()).match_report(&r);
        assert_eq!(m.branches, [Branch::Subheadings]);
        assert_eq!(m.pairs[0].sentence_index, 0);
    }

    #[test]
    fn encoder_fallback_and_threshold() {
        let table = table_from(&[
            ("heart", vec![1.0, 0.0, 0.0]),
            ("enlarged", vec![0.9, 0.1, 0.0]),
            ("lungs", vec![0.0, 1.0, 0.0]),
            ("clear", vec![0.0, 0.9, 0.1]),
            ("bones", vec![0.0, 0.0, 1.0]),
            ("cardiomegaly", vec![1.0, 0.05, 0.0]),
        ]);
        let r = report(
            "Lungs clear. Bones intact. Enlarged heart.",
            &["Cardiomegaly"],
        );
        let d = SynonymDict::new();
        let enc = SentenceEncoder::new(&table, 0.8);
        let cfg = MatcherConfig {
            use_neighbors: false,
            ..MatcherConfig::rule_encoder()
        };
        let m = Matcher::new(&d, Some(&table), Some(&enc), cfg).match_report(&r);
        assert_eq!(m.branches, [Branch::Encoder]);
        assert_eq!(m.pairs[0].sentence_index, 2);
        assert_eq!(m.pairs[0].provenance, Provenance::Encoder);

        let strict = SentenceEncoder::new(&table, 0.999_999);
        let m = Matcher::new(&d, Some(&table), Some(&strict), cfg).match_report(&r);
        assert_eq!(m.branches, [Branch::Unmatched]);
        assert!(m.pairs.is_empty());

        let off = MatcherConfig {
            use_encoder_fallback: false,
            ..cfg
        };
        let m = Matcher::new(&d, Some(&table), Some(&enc), off).match_report(&r);
        assert_eq!(m.branches, [Branch::Unmatched]);
    }

    #[test]
    fn corpus_histogram() {
        let reports = vec![
            report("Cardiomegaly. Lungs clear.", &["Cardiomegaly"]),
            report("No effusion. Small nodule.", &["Nodule/small"]),
        ];
        let d = SynonymDict::new();
        let m = Matcher::new(&d, None, None, MatcherConfig::full_rule()).match_corpus(&reports);
        assert_eq!(m.count(Branch::Unique), 2);
        assert_eq!(m.pairs.len(), 2);
    }

    #[test]
    fn random_baseline_properties() {
        let single = report("Cardiomegaly.", &["Cardiomegaly", "Heart"]);
        assert!(random_baseline(&single, 3)
            .iter()
            .all(|p| p.sentence_index == 0));
        let multi = report("A one. B two. C three. D four.", &["A", "B", "C"]);
        assert_eq!(random_baseline(&multi, 9), random_baseline(&multi, 9));
        assert!(random_baseline(&multi, 9)
            .iter()
            .all(|p| p.sentence_index < 4));
    }

    fn gt(ann: usize, sent: usize) -> MatchedPair {
        MatchedPair {
            report_id: "r".into(),
            annotation_index: ann,
            sentence_index: sent,
            label: 1,
            provenance: Provenance::Manual,
        }
    }

    #[test]
    fn accuracy_examples() {
        let truth = vec![gt(0, 1), gt(1, 2)];
        assert_eq!(evaluate_matching(&truth, &truth).unwrap().accuracy(), 1.0);
        assert_eq!(
            evaluate_matching(&[gt(0, 1)], &truth).unwrap().accuracy(),
            0.5
        );
        assert_eq!(
            evaluate_matching(&[gt(0, 1), gt(1, 0)], &truth)
                .unwrap()
                .accuracy(),
            0.5
        );
        assert!(matches!(
            evaluate_matching(&[gt(5, 0)], &truth),
            Err(MatchError::MissingGroundTruth {
                annotation_index: 5,
                ..
            })
        ));
        assert!(matches!(
            evaluate_matching(&truth, &[]),
            Err(MatchError::EmptyGroundTruth)
        ));
    }
}
