//! Deterministic synthetic reports with exact sentence/annotation ground truth.
//!
//! Each annotated sentence is generated from the same draw as its annotation:
//! a finding, optional location, side and severity qualifiers, and a surface
//! form for the finding (literal, dictionary synonym, inflected form matching
//! only by stem, or an adjectival form reachable only through embeddings).
//! Other sentences are normal statements or negated findings absent from the
//! report.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{compute_stats, parse_annotation, CorpusStats, Report};
use crate::matcher::{MatchedPair, Provenance, SynonymDict};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad synthetic corpus config: {0}")]
    BadConfig(String),
}

/// How the finding is worded in its sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurfaceForm {
    Literal,
    Synonym,
    Inflected,
    Adjectival,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingSpec {
    /// Annotation heading, as written in annotations.
    pub heading: String,
    /// Literal wording in report text.
    pub text: String,
    pub synonyms: Vec<String>,
    /// Form sharing the heading's Porter stem.
    pub inflected: Option<String>,
    /// Adjective with a different stem but shared character n-grams.
    pub adjectival: Option<String>,
    pub locations: Vec<String>,
    pub sides: Vec<String>,
    pub severities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_reports: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    /// Chance that a sentence carries no annotation.
    pub negative_fraction: f64,
    /// Chance that an unannotated sentence negates a finding absent from
    /// the report instead of stating a normal observation.
    pub negation_fraction: f64,
    /// Chance that an annotated sentence carries a second finding.
    pub multi_fraction: f64,
    /// Chance of each qualifier being present.
    pub qualifier_fraction: f64,
    pub synonym_fraction: f64,
    pub inflected_fraction: f64,
    pub embedding_fraction: f64,
    pub findings: Vec<FindingSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_reports: 1000,
            min_sentences: 4,
            max_sentences: 12,
            negative_fraction: 0.65,
            negation_fraction: 0.3,
            multi_fraction: 0.1,
            qualifier_fraction: 0.8,
            synonym_fraction: 0.2,
            inflected_fraction: 0.15,
            embedding_fraction: 0.1,
            findings: default_findings(),
        }
    }
}

fn finding(
    heading: &str,
    text: &str,
    synonyms: &[&str],
    inflected: Option<&str>,
    adjectival: Option<&str>,
    locations: &[&str],
    sides: bool,
    severities: &[&str],
) -> FindingSpec {
    let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
    FindingSpec {
        heading: heading.into(),
        text: text.into(),
        synonyms: own(synonyms),
        inflected: inflected.map(Into::into),
        adjectival: adjectival.map(Into::into),
        locations: own(locations),
        sides: if sides {
            own(&["left", "right", "bilateral"])
        } else {
            Vec::new()
        },
        severities: own(severities),
    }
}

pub fn default_findings() -> Vec<FindingSpec> {
    let lung = ["base", "upper lobe", "lower lobe", "apex", "midlung"];
    vec![
        finding(
            "Opacity",
            "opacity",
            &["density"],
            Some("opacities"),
            None,
            &lung,
            true,
            &["mild", "patchy"],
        ),
        finding(
            "Pleural Effusion",
            "pleural effusion",
            &["hydrothorax"],
            Some("pleural effusions"),
            None,
            &[],
            true,
            &["small", "moderate", "large"],
        ),
        finding(
            "Cardiomegaly",
            "cardiomegaly",
            &["enlarged heart", "enlarged cardiac silhouette"],
            None,
            None,
            &[],
            false,
            &["mild", "moderate", "severe"],
        ),
        finding(
            "Nodule",
            "nodule",
            &["coin lesion"],
            Some("nodules"),
            Some("nodular"),
            &lung,
            true,
            &["small"],
        ),
        finding(
            "Emphysema",
            "emphysema",
            &[],
            None,
            Some("emphysematous"),
            &["apex", "upper lobe"],
            false,
            &["mild", "severe"],
        ),
        finding(
            "Atelectasis",
            "atelectasis",
            &["volume loss"],
            None,
            Some("atelectatic"),
            &["base", "lower lobe"],
            true,
            &["mild"],
        ),
        finding(
            "Pulmonary Disease, Chronic Obstructive",
            "chronic obstructive pulmonary disease",
            &["copd"],
            None,
            None,
            &[],
            false,
            &[],
        ),
        finding(
            "Cicatrix",
            "cicatrix",
            &["scarring"],
            None,
            None,
            &lung,
            true,
            &[],
        ),
        finding(
            "Granuloma",
            "granuloma",
            &[],
            Some("granulomas"),
            Some("granulomatous"),
            &lung,
            true,
            &["calcified"],
        ),
        finding(
            "Calcinosis",
            "calcinosis",
            &["calcification"],
            None,
            None,
            &["hilum", "aorta"],
            true,
            &[],
        ),
        finding(
            "Edema",
            "edema",
            &["vascular congestion"],
            None,
            Some("edematous"),
            &[],
            false,
            &["mild", "moderate"],
        ),
        finding(
            "Fibrosis",
            "fibrosis",
            &[],
            None,
            Some("fibrotic"),
            &["base", "apex"],
            true,
            &["mild"],
        ),
        finding(
            "Hypoinflation",
            "hypoinflation",
            &["low lung volumes"],
            None,
            None,
            &[],
            false,
            &[],
        ),
        finding(
            "Fractures, Bone",
            "fracture",
            &[],
            Some("fractures"),
            None,
            &["rib", "clavicle"],
            true,
            &["healed"],
        ),
        finding(
            "Pneumothorax",
            "pneumothorax",
            &[],
            None,
            None,
            &[],
            true,
            &["small"],
        ),
        finding(
            "Consolidation",
            "consolidation",
            &["airspace disease"],
            Some("consolidations"),
            None,
            &lung,
            true,
            &[],
        ),
        finding(
            "Hernia, Hiatal",
            "hiatal hernia",
            &["hiatus hernia"],
            None,
            None,
            &[],
            false,
            &["small", "large"],
        ),
        finding(
            "Osteophyte",
            "osteophyte",
            &["spurring"],
            Some("osteophytes"),
            None,
            &["thoracic vertebrae"],
            false,
            &[],
        ),
    ]
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadConfig(m));
        for (name, v) in [
            ("negative_fraction", self.negative_fraction),
            ("negation_fraction", self.negation_fraction),
            ("multi_fraction", self.multi_fraction),
            ("qualifier_fraction", self.qualifier_fraction),
            ("synonym_fraction", self.synonym_fraction),
            ("inflected_fraction", self.inflected_fraction),
            ("embedding_fraction", self.embedding_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if self.synonym_fraction + self.inflected_fraction + self.embedding_fraction > 1.0 {
            return bad("surface-form fractions sum above 1".into());
        }
        if self.findings.len() < 2 {
            return bad("at least two findings are needed".into());
        }
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return bad(format!(
                "sentence range {}..={} is empty",
                self.min_sentences, self.max_sentences
            ));
        }
        Ok(())
    }

    pub fn mean_sentences(&self) -> f64 {
        (self.min_sentences + self.max_sentences) as f64 / 2.0
    }
}

/// A generated corpus with its exact ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub reports: Vec<Report>,
    pub ground_truth: Vec<MatchedPair>,
    /// Surface form used for each ground-truth pair, same order.
    pub forms: Vec<SurfaceForm>,
    pub dictionary: SynonymDict,
    pub stats: CorpusStats,
}

const NORMAL_STATEMENTS: [&str; 6] = [
    "the heart is normal in size",
    "the mediastinum is unremarkable",
    "the lungs are clear",
    "no acute cardiopulmonary abnormality",
    "the osseous structures are XXXX intact",
    "the trachea is midline",
];

const NEGATION_TEMPLATES: [&str; 3] = ["no {}", "there is no {}", "no evidence of {}"];

struct Drawn {
    phrase: String,
    annotation: String,
    form: SurfaceForm,
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [String], p: f64) -> Option<&'a String> {
    if items.is_empty() || !rng.gen_bool(p) {
        None
    } else {
        items.choose(rng)
    }
}

fn draw_finding<R: Rng>(rng: &mut R, f: &FindingSpec, cfg: &SynthConfig) -> Drawn {
    let location = pick(rng, &f.locations, cfg.qualifier_fraction);
    let side = pick(rng, &f.sides, cfg.qualifier_fraction);
    let severity = pick(rng, &f.severities, cfg.qualifier_fraction);

    let r: f64 = rng.gen();
    let syn_cut = cfg.synonym_fraction;
    let infl_cut = syn_cut + cfg.inflected_fraction;
    let emb_cut = infl_cut + cfg.embedding_fraction;
    let (form, word) = if r < syn_cut && !f.synonyms.is_empty() {
        (
            SurfaceForm::Synonym,
            f.synonyms.choose(rng).unwrap().clone(),
        )
    } else if let (true, Some(w)) = ((syn_cut..infl_cut).contains(&r), &f.inflected) {
        (SurfaceForm::Inflected, w.clone())
    } else if let (true, Some(a)) = ((infl_cut..emb_cut).contains(&r), &f.adjectival) {
        (SurfaceForm::Adjectival, format!("{a} changes"))
    } else {
        (SurfaceForm::Literal, f.text.clone())
    };

    let mut words: Vec<&str> = Vec::new();
    if let Some(s) = severity {
        words.push(s);
    }
    if location.is_none() {
        if let Some(s) = side {
            words.push(s);
        }
    }
    words.push(&word);
    let mut phrase = words.join(" ");
    if let Some(loc) = location {
        phrase.push_str(" in the ");
        if let Some(s) = side {
            phrase.push_str(s);
            phrase.push(' ');
        }
        phrase.push_str(loc);
    }

    let mut terms = vec![f.heading.clone()];
    terms.extend(location.cloned());
    terms.extend(side.cloned());
    terms.extend(severity.cloned());
    Drawn {
        phrase,
        annotation: terms.join("/"),
        form,
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reports = Vec::with_capacity(cfg.n_reports);
    let mut truth = Vec::new();
    let mut forms = Vec::new();
    let openers = ["", "there is ", "stable ", "again seen is "];

    for r in 0..cfg.n_reports {
        let id = format!("SYN{:05}", r + 1);
        let n = rng.gen_range(cfg.min_sentences..=cfg.max_sentences);
        let mut order: Vec<usize> = (0..cfg.findings.len()).collect();
        order.shuffle(&mut rng);
        let mut next_finding = order.into_iter();
        let mut present: Vec<usize> = Vec::new();
        let mut slots: Vec<Option<Vec<Drawn>>> = Vec::with_capacity(n);
        for _ in 0..n {
            if rng.gen_bool(cfg.negative_fraction) {
                slots.push(None);
                continue;
            }
            let count = if rng.gen_bool(cfg.multi_fraction) {
                2
            } else {
                1
            };
            let mut drawn = Vec::new();
            for _ in 0..count {
                if let Some(fi) = next_finding.next() {
                    present.push(fi);
                    drawn.push(draw_finding(&mut rng, &cfg.findings[fi], cfg));
                }
            }
            slots.push(if drawn.is_empty() { None } else { Some(drawn) });
        }

        let absent: Vec<usize> = (0..cfg.findings.len())
            .filter(|i| !present.contains(i))
            .collect();
        let mut sentences = Vec::with_capacity(n);
        let mut annotations = Vec::new();
        for (si, slot) in slots.into_iter().enumerate() {
            let text = match slot {
                None => {
                    if !absent.is_empty() && rng.gen_bool(cfg.negation_fraction) {
                        let f = &cfg.findings[*absent.choose(&mut rng).unwrap()];
                        NEGATION_TEMPLATES
                            .choose(&mut rng)
                            .unwrap()
                            .replace("{}", &f.text)
                    } else {
                        NORMAL_STATEMENTS.choose(&mut rng).unwrap().to_string()
                    }
                }
                Some(drawn) => {
                    let opener = openers.choose(&mut rng).unwrap();
                    let phrases: Vec<&str> = drawn.iter().map(|d| d.phrase.as_str()).collect();
                    for d in drawn.iter() {
                        truth.push(MatchedPair {
                            report_id: id.clone(),
                            annotation_index: annotations.len(),
                            sentence_index: si,
                            label: 1,
                            provenance: Provenance::Manual,
                        });
                        forms.push(d.form);
                        annotations.push(
                            parse_annotation(&d.annotation)
                                .expect("generated annotations are valid"),
                        );
                    }
                    format!("{opener}{}", phrases.join(" and "))
                }
            };
            sentences.push(format!("{}.", capitalize(&text)));
        }

        let split = if n > 2 { n - 1 } else { n };
        reports.push(Report {
            id,
            comparison: Some("None.".into()),
            indication: Some("Chest pain.".into()),
            findings_text: Some(sentences[..split].join(" ")),
            impression_text: (split < n).then(|| sentences[split..].join(" ")),
            annotations,
            is_normal: false,
        });
    }

    let dictionary: SynonymDict = cfg
        .findings
        .iter()
        .flat_map(|f| {
            let h = f.heading.to_lowercase();
            f.synonyms.iter().map(move |s| (h.clone(), s.clone()))
        })
        .collect();
    let stats = compute_stats(&reports, &truth);
    Ok(SynthCorpus {
        reports,
        ground_truth: truth,
        forms,
        dictionary,
        stats,
    })
}
