use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use radnote::corpus::{
    compute_stats, filter_normals, make_splits, read_corpus, read_splits, write_corpus,
    write_splits, Report,
};
use radnote::embed::{
    calibrate_threshold, make_encoder_pairs, read_embeddings, report_streams, train_embeddings,
    write_embeddings, EmbeddingConfig, EmbeddingTable, SentenceEncoder, DEFAULT_K,
};
use radnote::matcher::{
    random_baseline, read_dictionary, read_matches, run_ablation, write_dictionary, write_matches,
    Branch, MatchedPair, Matcher, MatcherConfig, SynonymDict,
};
use radnote::metrics::{evaluate, EvalPair, EvaluationReport};
use radnote::seq2seq::{
    annotate_report, beam_search, build_targets, paragraph_pairs, read_model,
    reference_annotations, render_annotations, sentence_pairs, train_with, write_model, ModelDims,
    PointerGenModel, TrainConfig, TrainingPair, Vocab,
};
use radnote::synth::{generate, SynthConfig};

use crate::manifest::Manifest;
use crate::settings::Settings;
use crate::{Command, UsageError};

const CORPUS: &str = "corpus.jsonl";
const DICTIONARY: &str = "dictionary.tsv";
const MANUAL_MATCHES: &str = "manual_matches.tsv";
const MATCHES: &str = "matches.tsv";
const EMBEDDINGS: &str = "embeddings.bin";
const ENCODER: &str = "encoder.json";
const MODEL: &str = "model.bin";
const SPLITS: &str = "splits.txt";

/// Fills every unset non-path key with its default.
fn with_defaults(s: Settings) -> Settings {
    let e = EmbeddingConfig::default();
    let t = TrainConfig::default();
    let d = ModelDims::default();
    let y = SynthConfig::default();
    Settings {
        out_dir: s.out_dir.or(Some(PathBuf::from("out"))),
        seed: s.seed.or(Some(1)),
        train_ratio: s.train_ratio.or(Some(0.8)),
        val_ratio: s.val_ratio.or(Some(0.1)),
        test_ratio: s.test_ratio.or(Some(0.1)),
        split: s.split.or(Some("test".into())),
        embed_dim: s.embed_dim.or(Some(e.dim)),
        embed_window: s.embed_window.or(Some(e.window)),
        embed_negative: s.embed_negative.or(Some(e.negative)),
        embed_epochs: s.embed_epochs.or(Some(e.epochs)),
        embed_min_count: s.embed_min_count.or(Some(e.min_count)),
        embed_lr: s.embed_lr.or(Some(e.learning_rate)),
        method: s.method.or(Some("rule-encoder".into())),
        k: s.k.or(Some(DEFAULT_K)),
        emb_dim: s.emb_dim.or(Some(d.emb_dim)),
        enc_hidden: s.enc_hidden.or(Some(d.enc_hidden)),
        learning_rate: s.learning_rate.or(Some(t.learning_rate)),
        batch_size: s.batch_size.or(Some(t.batch_size)),
        grad_clip_norm: s.grad_clip_norm.or(Some(t.grad_clip_norm)),
        beam_size: s.beam_size.or(Some(t.beam_size)),
        max_decode_len: s.max_decode_len.or(Some(t.max_decode_len)),
        epochs: s.epochs.or(Some(t.epochs)),
        min_token_freq: s.min_token_freq.or(Some(t.min_token_freq)),
        paragraph_level: s.paragraph_level.or(Some(t.paragraph_level)),
        n_reports: s.n_reports.or(Some(y.n_reports)),
        min_sentences: s.min_sentences.or(Some(y.min_sentences)),
        max_sentences: s.max_sentences.or(Some(y.max_sentences)),
        negative_fraction: s.negative_fraction.or(Some(y.negative_fraction)),
        negation_fraction: s.negation_fraction.or(Some(y.negation_fraction)),
        multi_fraction: s.multi_fraction.or(Some(y.multi_fraction)),
        qualifier_fraction: s.qualifier_fraction.or(Some(y.qualifier_fraction)),
        synonym_fraction: s.synonym_fraction.or(Some(y.synonym_fraction)),
        inflected_fraction: s.inflected_fraction.or(Some(y.inflected_fraction)),
        embedding_fraction: s.embedding_fraction.or(Some(y.embedding_fraction)),
        ..s
    }
}

struct Run {
    command: Command,
    s: Settings,
    out: PathBuf,
    seed: u64,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    /// Resolves an input path: the explicit setting, else `<out-dir>/<name>`.
    /// The resolved path is recorded in the settings for the manifest.
    fn input(
        &mut self,
        slot: fn(&mut Settings) -> &mut Option<PathBuf>,
        name: &str,
        key: &str,
    ) -> Result<PathBuf> {
        let path = slot(&mut self.s)
            .get_or_insert_with(|| self.out.join(name))
            .clone();
        if !path.is_file() {
            bail!("missing {key} file {} (set --{key})", path.display());
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    /// Like `input`, but absent files are fine when the key was not set.
    fn optional_input(
        &mut self,
        slot: fn(&mut Settings) -> &mut Option<PathBuf>,
        name: &str,
        key: &str,
    ) -> Result<Option<PathBuf>> {
        if slot(&mut self.s).is_none() && !self.out.join(name).is_file() {
            return Ok(None);
        }
        self.input(slot, name, key).map(Some)
    }

    fn output(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        let canon = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
        if self.inputs.iter().any(|i| canon(i) == canon(&path)) {
            return Err(UsageError(format!(
                "output {} would overwrite an input; choose another --out-dir",
                path.display()
            ))
            .into());
        }
        self.outputs.push(path.clone());
        Ok(path)
    }

    fn finish(self) -> Result<()> {
        let mut m = Manifest::new(self.command.name(), self.seed, &self.s.entries());
        for p in &self.inputs {
            m.input(p)?;
        }
        for p in &self.outputs {
            m.artifact(p)?;
        }
        let path = m.write(&self.out)?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }
}

pub fn run(command: Command, settings: Settings) -> Result<()> {
    let s = with_defaults(settings);
    let out = s.out_dir.clone().expect("defaulted");
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut r = Run {
        command,
        seed: s.seed.expect("defaulted"),
        s,
        out,
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    match command {
        Command::Ingest => ingest(&mut r)?,
        Command::Split => split(&mut r)?,
        Command::TrainEmbed => train_embed(&mut r)?,
        Command::FitEncoder => fit_encoder(&mut r)?,
        Command::Match => match_cmd(&mut r)?,
        Command::EvalMatch => eval_match(&mut r)?,
        Command::Train => train(&mut r)?,
        Command::Annotate => annotate(&mut r)?,
        Command::Evaluate => evaluate_cmd(&mut r)?,
        Command::Synth => synth(&mut r)?,
    }
    r.finish()
}

fn load_corpus(r: &mut Run) -> Result<Vec<Report>> {
    let path = r.input(|s| &mut s.corpus, CORPUS, "corpus")?;
    read_corpus(&path).with_context(|| format!("{}", path.display()))
}

fn load_matches(path: &Path) -> Result<Vec<MatchedPair>> {
    read_matches(path).with_context(|| format!("{}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn ingest(r: &mut Run) -> Result<()> {
    if r.s.corpus.is_none() {
        return Err(UsageError("ingest needs --corpus".into()).into());
    }
    let reports = load_corpus(r)?;
    let total = reports.len();
    let reports = filter_normals(reports);
    let matches = match r.s.manual_matches.clone() {
        Some(p) => {
            r.input(|s| &mut s.manual_matches, MANUAL_MATCHES, "manual-matches")?;
            load_matches(&p)?
        }
        None => Vec::new(),
    };
    let stats = compute_stats(&reports, &matches);
    let corpus_out = r.output(CORPUS)?;
    write_corpus(&corpus_out, &reports)?;
    let text = format!(
        "input reports: {total}\nnormal reports removed: {}\n{}",
        total - reports.len(),
        stats.render()
    );
    let stats_out = r.output("stats.txt")?;
    write_text(&stats_out, &text)?;
    let json_out = r.output("stats.json")?;
    write_text(&json_out, &(serde_json::to_string_pretty(&stats)? + "\n"))?;
    print!("{text}");
    Ok(())
}

fn split(r: &mut Run) -> Result<()> {
    let reports = load_corpus(r)?;
    let ratios = [
        r.s.train_ratio.unwrap(),
        r.s.val_ratio.unwrap(),
        r.s.test_ratio.unwrap(),
    ];
    let split = make_splits(&reports, ratios, r.seed)?;
    let path = r.output(SPLITS)?;
    write_splits(&path, &split)?;
    println!(
        "train {} / val {} / test {}",
        split.train_ids.len(),
        split.val_ids.len(),
        split.test_ids.len()
    );
    Ok(())
}

fn embedding_config(s: &Settings, seed: u64) -> EmbeddingConfig {
    EmbeddingConfig {
        dim: s.embed_dim.unwrap(),
        window: s.embed_window.unwrap(),
        negative: s.embed_negative.unwrap(),
        epochs: s.embed_epochs.unwrap(),
        min_count: s.embed_min_count.unwrap(),
        learning_rate: s.embed_lr.unwrap(),
        seed,
        ..EmbeddingConfig::default()
    }
}

fn train_embed(r: &mut Run) -> Result<()> {
    let reports = load_corpus(r)?;
    let table = train_embeddings(&report_streams(&reports), &embedding_config(&r.s, r.seed))?;
    let path = r.output(EMBEDDINGS)?;
    write_embeddings(&path, &table)?;
    println!("{} words, dim {}", table.vocab().len(), table.dim());
    Ok(())
}

fn load_embeddings(r: &mut Run, required: bool) -> Result<Option<EmbeddingTable>> {
    let path = if required {
        Some(r.input(|s| &mut s.embeddings, EMBEDDINGS, "embeddings")?)
    } else {
        r.optional_input(|s| &mut s.embeddings, EMBEDDINGS, "embeddings")?
    };
    path.map(|p| read_embeddings(&p).with_context(|| format!("{}", p.display())))
        .transpose()
}

#[derive(Debug, Serialize, Deserialize)]
struct EncoderFile {
    threshold: f64,
    accuracy: f64,
    correlation: f64,
    pairs: usize,
}

fn fit_encoder(r: &mut Run) -> Result<()> {
    let reports = load_corpus(r)?;
    let table = load_embeddings(r, true)?.expect("required");
    let manual_path = r.input(|s| &mut s.manual_matches, MANUAL_MATCHES, "manual-matches")?;
    let manual = load_matches(&manual_path)?;
    let pairs = make_encoder_pairs(&reports, &manual, r.seed);
    let cal = calibrate_threshold(&SentenceEncoder::new(&table, 0.0), &pairs)?;
    let file = EncoderFile {
        threshold: cal.threshold,
        accuracy: cal.accuracy,
        correlation: cal.correlation,
        pairs: pairs.len(),
    };
    let path = r.output(ENCODER)?;
    write_text(&path, &(serde_json::to_string_pretty(&file)? + "\n"))?;
    println!(
        "threshold {:.6} (accuracy {:.4} on {} pairs, similarity/label correlation {:.4})",
        file.threshold, file.accuracy, file.pairs, file.correlation
    );
    Ok(())
}

fn load_threshold(r: &mut Run, required: bool) -> Result<Option<f64>> {
    let path = if required {
        Some(r.input(|s| &mut s.encoder, ENCODER, "encoder")?)
    } else {
        r.optional_input(|s| &mut s.encoder, ENCODER, "encoder")?
    };
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(&path)?;
    let file: EncoderFile =
        serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
    Ok(Some(file.threshold))
}

fn load_dictionary(r: &mut Run) -> Result<SynonymDict> {
    let path = r.input(|s| &mut s.dictionary, DICTIONARY, "dictionary")?;
    read_dictionary(&path).with_context(|| format!("{}", path.display()))
}

fn matcher_config(method: &str, k: usize) -> Result<Option<MatcherConfig>> {
    let cfg = match method {
        "random" => return Ok(None),
        "ngram" => MatcherConfig::ngram_only(),
        "ngram-neighbors" => MatcherConfig::ngram_neighbors(),
        "ngram-synonyms" => MatcherConfig::ngram_synonyms(),
        "ngram-neighbors-synonyms" => MatcherConfig::ngram_neighbors_synonyms(),
        "rule" => MatcherConfig::full_rule(),
        "rule-encoder" => MatcherConfig::rule_encoder(),
        other => return Err(UsageError(format!("unknown matching method {other:?}")).into()),
    };
    Ok(Some(MatcherConfig { k, ..cfg }))
}

fn match_cmd(r: &mut Run) -> Result<()> {
    let reports = load_corpus(r)?;
    let method = r.s.method.clone().unwrap();
    let config = matcher_config(&method, r.s.k.unwrap())?;
    let path = r.output(MATCHES)?;
    let Some(config) = config else {
        let pairs: Vec<MatchedPair> = reports
            .iter()
            .flat_map(|rep| random_baseline(rep, r.seed))
            .collect();
        write_matches(&path, &pairs, true)?;
        println!("{} random matches", pairs.len());
        return Ok(());
    };
    let dict = load_dictionary(r)?;
    let table = load_embeddings(r, config.use_neighbors || config.use_encoder_fallback)?;
    let threshold = load_threshold(r, config.use_encoder_fallback)?;
    let encoder = match (&table, threshold) {
        (Some(t), Some(th)) if config.use_encoder_fallback => Some(SentenceEncoder::new(t, th)),
        _ => None,
    };
    let m = Matcher::new(&dict, table.as_ref(), encoder.as_ref(), config).match_corpus(&reports);
    write_matches(&path, &m.pairs, true)?;
    let mut text = String::new();
    for b in Branch::ALL {
        text.push_str(&format!("{}\t{}\n", b.name(), m.count(b)));
    }
    let branches = r.output("branches.tsv")?;
    write_text(&branches, &text)?;
    println!("{} matches", m.pairs.len());
    print!("{text}");
    Ok(())
}

fn eval_match(r: &mut Run) -> Result<()> {
    let reports = load_corpus(r)?;
    let dict = load_dictionary(r)?;
    let truth_path = r.input(|s| &mut s.manual_matches, MANUAL_MATCHES, "manual-matches")?;
    let truth = load_matches(&truth_path)?;
    let table = load_embeddings(r, false)?;
    let threshold = load_threshold(r, false)?;
    let encoder = match (&table, threshold) {
        (Some(t), Some(th)) => Some(SentenceEncoder::new(t, th)),
        _ => None,
    };
    if table.is_none() || encoder.is_none() {
        eprintln!("note: without embeddings and encoder the neighbour and encoder rows reduce to their rule-only counterparts");
    }
    let k = r.s.k.unwrap();
    let ablation = run_ablation(
        &reports,
        &dict,
        table.as_ref(),
        encoder.as_ref(),
        &truth,
        r.seed,
        k,
    )?;
    let text = ablation.render();
    let path = r.output("ablation.txt")?;
    write_text(&path, &text)?;
    print!("{text}");
    Ok(())
}

fn train_config(s: &Settings, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: s.learning_rate.unwrap(),
        batch_size: s.batch_size.unwrap(),
        grad_clip_norm: s.grad_clip_norm.unwrap(),
        beam_size: s.beam_size.unwrap(),
        max_decode_len: s.max_decode_len.unwrap(),
        epochs: s.epochs.unwrap(),
        seed,
        min_token_freq: s.min_token_freq.unwrap(),
        paragraph_level: s.paragraph_level.unwrap(),
    }
}

/// Reports of the requested split; all reports when no split file exists.
fn select_split(r: &mut Run, reports: &[Report], which: &str) -> Result<Vec<Report>> {
    let Some(path) = r.optional_input(|s| &mut s.splits, SPLITS, "splits")? else {
        return Ok(reports.to_vec());
    };
    let split = read_splits(&path).with_context(|| format!("{}", path.display()))?;
    let ids: HashSet<&str> = match which {
        "train" => split.train_ids.iter(),
        "val" => split.val_ids.iter(),
        "test" => split.test_ids.iter(),
        "all" => return Ok(reports.to_vec()),
        other => return Err(UsageError(format!("unknown split {other:?}")).into()),
    }
    .map(String::as_str)
    .collect();
    Ok(reports
        .iter()
        .filter(|rep| ids.contains(rep.id.as_str()))
        .cloned()
        .collect())
}

fn training_pairs(
    reports: &[Report],
    matches: &[MatchedPair],
    paragraph: bool,
) -> Vec<TrainingPair> {
    if paragraph {
        paragraph_pairs(reports)
    } else {
        sentence_pairs(reports, matches)
    }
}

fn train(r: &mut Run) -> Result<()> {
    let reports = load_corpus(r)?;
    let config = train_config(&r.s, r.seed);
    let matches = if config.paragraph_level {
        Vec::new()
    } else {
        let default = if r.s.matches.is_none() && !r.out.join(MATCHES).is_file() {
            MANUAL_MATCHES
        } else {
            MATCHES
        };
        let path = r.input(|s| &mut s.matches, default, "matches")?;
        load_matches(&path)?
    };
    let has_splits = r.s.splits.is_some() || r.out.join(SPLITS).is_file();
    let train_reports = select_split(r, &reports, "train")?;
    let val_reports = if has_splits {
        select_split(r, &reports, "val")?
    } else {
        Vec::new()
    };
    let train_pairs = training_pairs(&train_reports, &matches, config.paragraph_level);
    let val_pairs = training_pairs(&val_reports, &matches, config.paragraph_level);
    let vocab = Vocab::from_pairs(&train_pairs, config.min_token_freq);
    let dims = ModelDims {
        emb_dim: r.s.emb_dim.unwrap(),
        enc_hidden: r.s.enc_hidden.unwrap(),
    };
    let mut model = PointerGenModel::new(vocab, dims, config.seed);
    eprintln!(
        "{} training pairs, {} validation pairs, vocab {}, {} parameters",
        train_pairs.len(),
        val_pairs.len(),
        model.vocab().len(),
        model.parameter_count()
    );
    let mut log = String::from("epoch\ttrain_loss\tval_loss\n");
    let report = train_with(&mut model, &train_pairs, &val_pairs, &config, |e| {
        eprintln!(
            "epoch {} train {:.5} val {:.5}",
            e.epoch, e.train_loss, e.val_loss
        );
        log.push_str(&format!("{}\t{}\t{}\n", e.epoch, e.train_loss, e.val_loss));
    })?;
    let path = r.output(MODEL)?;
    write_model(&path, &model, &config)?;
    let log_path = r.output("train_log.tsv")?;
    write_text(&log_path, &log)?;
    println!("best epoch {}", report.best_epoch);
    Ok(())
}

fn load_model(r: &mut Run) -> Result<(PointerGenModel, TrainConfig)> {
    let path = r.input(|s| &mut s.model, MODEL, "model")?;
    read_model(&path).with_context(|| format!("{}", path.display()))
}

#[derive(Serialize)]
struct AnnotatedReport<'a> {
    id: &'a str,
    annotations: Vec<String>,
}

fn annotate(r: &mut Run) -> Result<()> {
    let reports = load_corpus(r)?;
    let (model, config) = load_model(r)?;
    let which = r.s.split.clone().unwrap();
    let selected = select_split(r, &reports, &which)?;
    let beam = r.s.beam_size.unwrap();
    let max_len = r.s.max_decode_len.unwrap();
    let path = r.output("annotations.jsonl")?;
    let mut w = BufWriter::new(fs::File::create(&path)?);
    for rep in &selected {
        let annotations = annotate_report(&model, rep, beam, max_len, config.paragraph_level)?;
        let line = AnnotatedReport {
            id: &rep.id,
            annotations,
        };
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
    }
    w.flush()?;
    println!("annotated {} reports", selected.len());
    Ok(())
}

fn evaluate_cmd(r: &mut Run) -> Result<()> {
    let reports = load_corpus(r)?;
    let (model, config) = load_model(r)?;
    let which = r.s.split.clone().unwrap();
    let selected = select_split(r, &reports, &which)?;
    let beam = r.s.beam_size.unwrap();
    let max_len = r.s.max_decode_len.unwrap();

    let mut tables = Vec::new();
    if !config.paragraph_level {
        let default = if r.s.matches.is_none() && !r.out.join(MATCHES).is_file() {
            MANUAL_MATCHES
        } else {
            MATCHES
        };
        if let Some(path) = r.optional_input(|s| &mut s.matches, default, "matches")? {
            let matches = load_matches(&path)?;
            let mut by_sentence: HashMap<(&str, usize), Vec<usize>> = HashMap::new();
            for m in matches.iter().filter(|m| m.label == 1) {
                by_sentence
                    .entry((m.report_id.as_str(), m.sentence_index))
                    .or_default()
                    .push(m.annotation_index);
            }
            let mut pairs = Vec::new();
            for rep in &selected {
                for s in rep.sentences().unwrap_or_default() {
                    let mut idx = by_sentence
                        .get(&(rep.id.as_str(), s.index))
                        .cloned()
                        .unwrap_or_default();
                    idx.sort_unstable();
                    idx.dedup();
                    let anns: Vec<_> = idx.iter().filter_map(|&i| rep.annotations.get(i)).collect();
                    let reference = render_annotations(&build_targets(&anns));
                    if reference.is_empty() || s.tokens.is_empty() {
                        continue;
                    }
                    let hyp = beam_search(&model, &s.tokens, beam, max_len)?;
                    pairs.push(EvalPair::from_annotations(
                        &render_annotations(&hyp.words),
                        &reference,
                    ));
                }
            }
            tables.push(evaluate("sentence", &pairs));
        }
    }
    let mut pairs = Vec::new();
    for rep in &selected {
        let predicted = annotate_report(&model, rep, beam, max_len, config.paragraph_level)?;
        pairs.push(EvalPair::from_annotations(
            &predicted,
            &reference_annotations(rep),
        ));
    }
    tables.push(evaluate("report", &pairs));

    let text = EvaluationReport::render_all(&tables);
    let path = r.output("evaluation.txt")?;
    write_text(&path, &text)?;
    print!("{text}");
    Ok(())
}

fn synth(r: &mut Run) -> Result<()> {
    let s = &r.s;
    let config = SynthConfig {
        seed: r.seed,
        n_reports: s.n_reports.unwrap(),
        min_sentences: s.min_sentences.unwrap(),
        max_sentences: s.max_sentences.unwrap(),
        negative_fraction: s.negative_fraction.unwrap(),
        negation_fraction: s.negation_fraction.unwrap(),
        multi_fraction: s.multi_fraction.unwrap(),
        qualifier_fraction: s.qualifier_fraction.unwrap(),
        synonym_fraction: s.synonym_fraction.unwrap(),
        inflected_fraction: s.inflected_fraction.unwrap(),
        embedding_fraction: s.embedding_fraction.unwrap(),
        ..SynthConfig::default()
    };
    let corpus = generate(&config)?;
    let p = r.output(CORPUS)?;
    write_corpus(&p, &corpus.reports)?;
    let p = r.output(DICTIONARY)?;
    write_dictionary(&p, &corpus.dictionary)?;
    let p = r.output(MANUAL_MATCHES)?;
    write_matches(&p, &corpus.ground_truth, false)?;
    let text = corpus.stats.render();
    let p = r.output("stats.txt")?;
    write_text(&p, &text)?;
    print!("{text}");
    Ok(())
}
