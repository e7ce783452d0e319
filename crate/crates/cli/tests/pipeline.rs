use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn radnote(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radnote"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = radnote(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn accuracy(table: &str, method: &str) -> f64 {
    let line = table
        .lines()
        .find(|l| l.starts_with(method) && l[method.len()..].starts_with("  "))
        .unwrap_or_else(|| panic!("no row {method:?} in\n{table}"));
    line[method.len()..]
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn synth_match_eval_match_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["synth", "--out-dir", d]);
    ok(&["train-embed", "--out-dir", d]);
    ok(&["fit-encoder", "--out-dir", d]);
    ok(&["match", "--out-dir", d]);
    let table = ok(&["eval-match", "--out-dir", d]);
    let full = accuracy(&table, "rule-based");
    let with_encoder = accuracy(&table, "rule-based + sentence encoder");
    assert!(full >= 0.95, "{table}");
    assert!(with_encoder >= full, "{table}");
    for name in ["synth", "train-embed", "fit-encoder", "match", "eval-match"] {
        let manifest: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join(format!("{name}.manifest.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest["seed"], 1);
        assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
        assert!(!manifest["artifacts"].as_object().unwrap().is_empty());
    }
}

#[test]
fn malformed_corpus_line_is_a_data_error_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("in.jsonl");
    fs::write(
        &corpus,
        "{\"id\":\"a\",\"findings\":\"Mild cardiomegaly.\",\"annotations\":[\"Cardiomegaly/mild\"]}\n\
         {\"id\":\"b\",\"findings\":\"Clear lungs.\"\n\
         {\"id\":\"c\",\"findings\":\"No effusion.\",\"annotations\":[\"normal\"]}\n",
    )
    .unwrap();
    let out = radnote(&[
        "ingest",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}

#[test]
fn ingest_drops_normal_reports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("in.jsonl");
    fs::write(
        &corpus,
        "{\"id\":\"a\",\"findings\":\"Mild cardiomegaly. Lungs are clear.\",\"annotations\":[\"Cardiomegaly/mild\"]}\n\
         {\"id\":\"c\",\"findings\":\"No effusion.\",\"annotations\":[\"normal\"]}\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let text = ok(&[
        "ingest",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(text.contains("normal reports removed: 1"), "{text}");
    let written = fs::read_to_string(out_dir.join("corpus.jsonl")).unwrap();
    assert_eq!(written.lines().count(), 1);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(radnote(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(radnote(&["synth", "--seed", "abc"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = radnote(&["synth", "--out-dir", d, "--negative-fraction", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = radnote(&["match", "--out-dir", d]);
    assert_eq!(out.status.code(), Some(2), "missing corpus is a data error");
    assert!(String::from_utf8_lossy(&out.stderr).contains("corpus"));
}

#[test]
fn config_file_values_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    let out_dir = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "# small corpus\nout-dir = {}\nn-reports = 12\nseed = 4\n",
            out_dir.display()
        ),
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    ok(&["--config", c, "synth"]);
    let first = fs::read_to_string(out_dir.join("corpus.jsonl")).unwrap();
    assert_eq!(first.lines().count(), 12);
    ok(&["synth", "--config", c, "--n-reports", "5"]);
    let second = fs::read_to_string(out_dir.join("corpus.jsonl")).unwrap();
    assert_eq!(second.lines().count(), 5);
    let manifest = fs::read_to_string(out_dir.join("synth.manifest.json")).unwrap();
    assert!(manifest.contains("\"n-reports\": \"5\""), "{manifest}");
    assert!(manifest.contains("\"seed\": 4"), "{manifest}");

    fs::write(&cfg, "bogus-key = 1\n").unwrap();
    let out = radnote(&["--config", c, "synth"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.conf:1"));
}

fn checksum(manifest: &Path, artifact: &str) -> String {
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
    v["artifacts"][artifact].as_str().unwrap().to_string()
}

#[test]
fn training_twice_with_the_same_seed_gives_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["synth", "--out-dir", d, "--n-reports", "40"]);
    let mut sums = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = out.to_str().unwrap();
        ok(&[
            "train",
            "--corpus",
            &format!("{d}/corpus.jsonl"),
            "--matches",
            &format!("{d}/manual_matches.tsv"),
            "--out-dir",
            o,
            "--emb-dim",
            "8",
            "--enc-hidden",
            "6",
            "--epochs",
            "2",
            "--seed",
            "5",
        ]);
        sums.push(checksum(&out.join("train.manifest.json"), "model.bin"));
    }
    assert_eq!(sums[0], sums[1]);
}

#[test]
fn outputs_never_overwrite_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["synth", "--out-dir", d, "--n-reports", "5"]);
    let corpus = dir.path().join("corpus.jsonl");
    let before = fs::read(&corpus).unwrap();
    let out = radnote(&[
        "ingest",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out-dir",
        d,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(fs::read(&corpus).unwrap(), before);
}
