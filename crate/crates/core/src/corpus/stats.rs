use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Report;
use crate::matcher::MatchedPair;

/// Corpus-level counts of reports, sentences and matched annotations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub reports: usize,
    pub sentences: usize,
    pub annotations: usize,
    pub sentences_without_annotations: usize,
    pub sentences_with_annotations: usize,
    pub sentences_with_one_annotation: usize,
    pub sentences_with_several_annotations: usize,
    pub avg_words_per_sentence: f64,
    pub avg_words_per_annotation: f64,
}

/// Counts sentences and annotations; only label-1 pairs count as matches.
pub fn compute_stats(reports: &[Report], matches: &[MatchedPair]) -> CorpusStats {
    let mut per_sentence: HashMap<(&str, usize), BTreeSet<usize>> = HashMap::new();
    for m in matches.iter().filter(|m| m.label == 1) {
        per_sentence
            .entry((m.report_id.as_str(), m.sentence_index))
            .or_default()
            .insert(m.annotation_index);
    }

    let mut stats = CorpusStats {
        reports: reports.len(),
        ..CorpusStats::default()
    };
    let mut sentence_words = 0usize;
    let mut annotation_words = 0usize;
    for report in reports {
        let sentences = report.sentences().unwrap_or_default();
        stats.sentences += sentences.len();
        for s in &sentences {
            sentence_words += s.tokens.len();
            match per_sentence
                .get(&(report.id.as_str(), s.index))
                .map(BTreeSet::len)
            {
                None | Some(0) => stats.sentences_without_annotations += 1,
                Some(1) => stats.sentences_with_one_annotation += 1,
                Some(_) => stats.sentences_with_several_annotations += 1,
            }
        }
        stats.annotations += report.annotations.len();
        annotation_words += report
            .annotations
            .iter()
            .map(|a| a.tokens().len())
            .sum::<usize>();
    }
    stats.sentences_with_annotations =
        stats.sentences_with_one_annotation + stats.sentences_with_several_annotations;
    stats.avg_words_per_sentence = ratio(sentence_words, stats.sentences);
    stats.avg_words_per_annotation = ratio(annotation_words, stats.annotations);
    stats
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl CorpusStats {
    fn rows(&self) -> [(&'static str, &'static str, String); 9] {
        [
            ("reports", "# reports", self.reports.to_string()),
            ("sentences", "# sentences", self.sentences.to_string()),
            ("annotations", "# annotations", self.annotations.to_string()),
            (
                "sentences_without_annotations",
                "# sentences without annotations",
                self.sentences_without_annotations.to_string(),
            ),
            (
                "sentences_with_annotations",
                "# sentences with annotations",
                self.sentences_with_annotations.to_string(),
            ),
            (
                "sentences_with_one_annotation",
                "# sentences with only one annotation",
                self.sentences_with_one_annotation.to_string(),
            ),
            (
                "sentences_with_several_annotations",
                "# sentences with several annotations",
                self.sentences_with_several_annotations.to_string(),
            ),
            (
                "avg_words_per_sentence",
                "average # of words in sentences",
                format!("{:.2}", self.avg_words_per_sentence),
            ),
            (
                "avg_words_per_annotation",
                "average # of words in annotations",
                format!("{:.2}", self.avg_words_per_annotation),
            ),
        ]
    }

    /// Aligned table followed by `key=value` lines.
    pub fn render(&self) -> String {
        let rows = self.rows();
        let label_width = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
        let value_width = rows.iter().map(|r| r.2.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (_, label, value) in &rows {
            let _ = writeln!(out, "{label:<label_width$}  {value:>value_width$}");
        }
        out.push('\n');
        for (key, _, value) in &rows {
            let _ = writeln!(out, "{key}={value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_annotation;
    use crate::matcher::{MatchedPair, Provenance};

    fn pair(report: &str, ann: usize, sent: usize) -> MatchedPair {
        MatchedPair {
            report_id: report.into(),
            annotation_index: ann,
            sentence_index: sent,
            label: 1,
            provenance: Provenance::Manual,
        }
    }

    #[test]
    fn empty_corpus_is_all_zero() {
        assert_eq!(compute_stats(&[], &[]), CorpusStats::default());
    }

    #[test]
    fn counts_and_identities() {
        let report = Report {
            id: "r1".into(),
            comparison: None,
            indication: None,
            findings_text: Some("Low lung volumes. Calcified hilar lymph. No pneumothorax.".into()),
            impression_text: Some("No acute disease.".into()),
            annotations: vec![
                parse_annotation("Lung/hypoinflation").unwrap(),
                parse_annotation("Calcinosis/lung/hilum/lymph nodes").unwrap(),
                parse_annotation("Lymph nodes").unwrap(),
            ],
            is_normal: false,
        };
        let matches = [pair("r1", 0, 0), pair("r1", 1, 1), pair("r1", 2, 1)];
        let s = compute_stats(&[report], &matches);
        assert_eq!(s.reports, 1);
        assert_eq!(s.sentences, 4);
        assert_eq!(s.annotations, 3);
        assert_eq!(s.sentences_with_one_annotation, 1);
        assert_eq!(s.sentences_with_several_annotations, 1);
        assert_eq!(s.sentences_with_annotations, 2);
        assert_eq!(s.sentences_without_annotations, 2);
        assert!((s.avg_words_per_sentence - 11.0 / 4.0).abs() < 1e-12);
        assert!((s.avg_words_per_annotation - 9.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn render_has_table_and_keys() {
        let s = CorpusStats {
            reports: 2564,
            avg_words_per_sentence: 6.654,
            ..Default::default()
        };
        let text = s.render();
        assert!(text.contains("# reports"));
        assert!(text.contains("reports=2564"));
        assert!(text.contains("avg_words_per_sentence=6.65"));
    }
}
