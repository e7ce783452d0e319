use radnote::embed::{
    calibrate_threshold, make_encoder_pairs, report_streams, train_embeddings, EmbeddingConfig,
    SentenceEncoder,
};
use radnote::matcher::{Branch, Matcher, MatcherConfig};
use radnote::synth::{generate, SynthConfig};

fn resolved_by_rules(m: &radnote::matcher::CorpusMatches) -> usize {
    [Branch::Unique, Branch::HeadingOnly, Branch::Subheadings]
        .iter()
        .map(|&b| m.count(b))
        .sum()
}

#[test]
fn extra_candidate_sources_never_shrink_rule_coverage() {
    let corpus = generate(&SynthConfig {
        n_reports: 300,
        seed: 17,
        ..SynthConfig::default()
    })
    .unwrap();
    let table = train_embeddings(
        &report_streams(&corpus.reports),
        &EmbeddingConfig::default(),
    )
    .unwrap();
    let coverage = |cfg: MatcherConfig| {
        resolved_by_rules(
            &Matcher::new(&corpus.dictionary, Some(&table), None, cfg)
                .match_corpus(&corpus.reports),
        )
    };
    let chains = [
        [
            MatcherConfig::ngram_only(),
            MatcherConfig::ngram_synonyms(),
            MatcherConfig::ngram_neighbors_synonyms(),
            MatcherConfig::full_rule(),
        ],
        [
            MatcherConfig::ngram_only(),
            MatcherConfig::ngram_neighbors(),
            MatcherConfig::ngram_neighbors_synonyms(),
            MatcherConfig::full_rule(),
        ],
    ];
    for chain in chains {
        let counts: Vec<usize> = chain.iter().map(|c| coverage(*c)).collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    }
}

#[test]
fn matches_are_valid_and_deterministic() {
    let corpus = generate(&SynthConfig {
        n_reports: 200,
        seed: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let run = || {
        let table = train_embeddings(
            &report_streams(&corpus.reports),
            &EmbeddingConfig::default(),
        )
        .unwrap();
        let pairs = make_encoder_pairs(&corpus.reports, &corpus.ground_truth, 4);
        let cal = calibrate_threshold(&SentenceEncoder::new(&table, 0.0), &pairs).unwrap();
        let enc = SentenceEncoder::new(&table, cal.threshold);
        Matcher::new(
            &corpus.dictionary,
            Some(&table),
            Some(&enc),
            MatcherConfig::rule_encoder(),
        )
        .match_corpus(&corpus.reports)
    };
    let a = run();
    assert_eq!(a, run());
    for p in &a.pairs {
        let r = corpus.reports.iter().find(|r| r.id == p.report_id).unwrap();
        assert!(p.annotation_index < r.annotations.len());
        assert!(p.sentence_index < r.sentences().unwrap().len());
    }
}
