mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use radnote::corpus::CorpusError;
use radnote::seq2seq::Seq2SeqError;
use radnote::synth::SynthError;

use settings::Settings;

#[derive(Parser)]
#[command(
    name = "radnote",
    version,
    about = "Report/annotation matching and annotation generation"
)]
struct Cli {
    /// Flat key=value config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Parse a corpus, drop normal reports, write it back with statistics
    Ingest,
    /// Seeded train/validation/test split of report ids
    Split,
    /// Train subword word embeddings on the corpus
    TrainEmbed,
    /// Calibrate the sentence-encoder threshold on manual matches
    FitEncoder,
    /// Match annotations to sentences
    Match,
    /// Matching accuracy of every method against manual matches
    EvalMatch,
    /// Train the pointer-generator on matched sentence/annotation pairs
    Train,
    /// Generate annotations for reports
    Annotate,
    /// Score generated annotations at sentence and report level
    Evaluate,
    /// Generate a synthetic corpus with exact ground truth
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Split => "split",
            Command::TrainEmbed => "train-embed",
            Command::FitEncoder => "fit-encoder",
            Command::Match => "match",
            Command::EvalMatch => "eval-match",
            Command::Train => "train",
            Command::Annotate => "annotate",
            Command::Evaluate => "evaluate",
            Command::Synth => "synth",
        }
    }
}

/// Bad invocation or configuration.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(SynthError::BadConfig(_)) = cause.downcast_ref() {
            return EXIT_USAGE;
        }
        if let Some(CorpusError::BadRatios(_)) = cause.downcast_ref() {
            return EXIT_USAGE;
        }
        if let Some(Seq2SeqError::NaNGuard) = cause.downcast_ref() {
            return EXIT_NUMERICAL;
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = (|| {
        let file = match &cli.config {
            Some(path) => settings::load_config(path)?,
            None => Settings::default(),
        };
        commands::run(cli.command, cli.settings.or(file))
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e
                .chain()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(": ");
            eprintln!("radnote {}: {msg}", cli.command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
