//! Flat key=value settings shared by every subcommand.
//!
//! Every key can come from the config file or from a long flag of the same
//! name; flags win.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;

use crate::UsageError;

macro_rules! settings {
    ($( $(#[doc = $doc:literal])* $field:ident : $ty:ty ),* $(,)?) => {
        #[derive(Debug, Clone, Default, clap::Args)]
        pub struct Settings {
            $(
                $(#[doc = $doc])*
                #[arg(long, global = true)]
                pub $field: Option<$ty>,
            )*
        }

        impl Settings {
            /// Keeps values set here, filling the rest from `base`.
            pub fn or(self, base: Settings) -> Settings {
                Settings { $( $field: self.$field.or(base.$field), )* }
            }

            pub fn keys() -> Vec<String> {
                vec![$( stringify!($field).replace('_', "-") ),*]
            }

            /// Every set key with its value, in declaration order.
            pub fn entries(&self) -> Vec<(String, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field).replace('_', "-"), show(v)));
                    }
                )*
                out
            }
        }
    };
}

fn show<T: ShowValue>(v: &T) -> String {
    v.show_value()
}

trait ShowValue {
    fn show_value(&self) -> String;
}

impl ShowValue for PathBuf {
    fn show_value(&self) -> String {
        self.display().to_string()
    }
}

macro_rules! show_display {
    ($($t:ty),*) => { $( impl ShowValue for $t { fn show_value(&self) -> String { self.to_string() } } )* };
}
show_display!(String, u64, usize, f64, f32, bool);

settings! {
    /// Input corpus (one JSON record per line)
    corpus: PathBuf,
    /// Term/synonym dictionary (term<TAB>synonym)
    dictionary: PathBuf,
    /// Manual sentence/annotation matches
    manual_matches: PathBuf,
    /// Matcher output used as training pairs
    matches: PathBuf,
    embeddings: PathBuf,
    /// Calibrated encoder threshold (JSON)
    encoder: PathBuf,
    model: PathBuf,
    splits: PathBuf,
    /// Directory receiving artifacts and the run manifest
    out_dir: PathBuf,
    seed: u64,

    train_ratio: f64,
    val_ratio: f64,
    test_ratio: f64,
    /// Which split `annotate` and `evaluate` read: train, val, test or all
    split: String,

    embed_dim: usize,
    embed_window: usize,
    embed_negative: usize,
    embed_epochs: usize,
    embed_min_count: usize,
    embed_lr: f32,

    /// Matching method: random, ngram, ngram-neighbors, ngram-synonyms,
    /// ngram-neighbors-synonyms, rule or rule-encoder
    method: String,
    /// Neighbours per heading word
    k: usize,

    emb_dim: usize,
    enc_hidden: usize,
    learning_rate: f64,
    batch_size: usize,
    grad_clip_norm: f64,
    beam_size: usize,
    max_decode_len: usize,
    epochs: usize,
    min_token_freq: usize,
    paragraph_level: bool,

    n_reports: usize,
    min_sentences: usize,
    max_sentences: usize,
    negative_fraction: f64,
    negation_fraction: f64,
    multi_fraction: f64,
    qualifier_fraction: f64,
    synonym_fraction: f64,
    inflected_fraction: f64,
    embedding_fraction: f64,
}

#[derive(Parser)]
#[command(no_binary_name = true)]
struct FileSettings {
    #[command(flatten)]
    settings: Settings,
}

/// Parses a flat config file: `key = value` lines, `#` comments.
pub fn parse_config(text: &str, origin: &Path) -> Result<Settings, UsageError> {
    let keys = Settings::keys();
    let mut args: Vec<String> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = || format!("{}:{}", origin.display(), i + 1);
        let Some((key, value)) = line.split_once('=') else {
            return Err(UsageError(format!("{}: expected key=value", at())));
        };
        let key = key.trim().replace('_', "-");
        if !keys.contains(&key) {
            return Err(UsageError(format!("{}: unknown key {key:?}", at())));
        }
        args.push(format!("--{key}"));
        args.push(value.trim().to_string());
    }
    FileSettings::try_parse_from(args)
        .map(|f| f.settings)
        .map_err(|e| {
            UsageError(format!(
                "{}: {}",
                origin.display(),
                first_line(&e.to_string())
            ))
        })
}

pub fn load_config(path: &Path) -> anyhow::Result<Settings> {
    let text = fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    Ok(parse_config(&text, path)?)
}

fn first_line(s: &str) -> String {
    s.lines()
        .next()
        .unwrap_or("")
        .trim_start_matches("error: ")
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_parse_and_flags_win() {
        let file = parse_config(
            "# comment\nseed = 9\nout_dir=runs/a\nbeam-size = 3\n",
            Path::new("c"),
        )
        .unwrap();
        assert_eq!(file.seed, Some(9));
        assert_eq!(file.beam_size, Some(3));
        let flags = Settings {
            seed: Some(2),
            ..Settings::default()
        };
        let merged = flags.or(file);
        assert_eq!(merged.seed, Some(2));
        assert_eq!(merged.out_dir, Some(PathBuf::from("runs/a")));
        assert!(merged.entries().contains(&("beam-size".into(), "3".into())));
    }

    #[test]
    fn bad_lines_are_usage_errors() {
        let e = parse_config("seed 3", Path::new("c")).unwrap_err();
        assert!(e.0.contains("c:1"), "{}", e.0);
        let e = parse_config("\nnope = 1", Path::new("c")).unwrap_err();
        assert!(e.0.contains("c:2") && e.0.contains("nope"), "{}", e.0);
        assert!(parse_config("seed = abc", Path::new("c")).is_err());
    }
}
