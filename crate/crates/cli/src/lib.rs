//! The `misinfo` command line: each pipeline stage is a subcommand reading
//! and writing plain files.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, missing
//! options, malformed config files), 2 for data errors (unreadable or
//! malformed inputs, incompatible models).

mod commands;
mod config;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Settings, UsageError, KNOWN_KEYS};

#[derive(Debug, Parser)]
#[command(name = "misinfo", version, about = "Cancer misinformation pipeline over tweet corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key=value config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean and tokenize a tweet file.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        keep_hashtag_mark: Option<bool>,
    },
    /// Write a stratified 4:1 train/validation manifest.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train skip-gram word vectors on tweet text.
    TrainEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        min_count: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Train the medical-relevance classifier.
    TrainRelevance {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        category: Option<String>,
        /// tfidf or weighted
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Comma-separated hidden widths.
        #[arg(long)]
        hidden: Option<String>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate relevance models per domain.
    EvalRelevance {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        /// Model file; repeat for one column group per model.
        #[arg(long)]
        model: Vec<String>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Train a BIO anchor tagger.
    TrainTagger {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        category: Option<String>,
        /// crf, bilstm-softmax, bilstm-crf, attn-bilstm-crf or self-attn-bilstm-crf
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// LSTM width per direction.
        #[arg(long)]
        hidden: Option<usize>,
        /// Comma-separated per-token feature names to one-hot encode.
        #[arg(long)]
        features: Option<String>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate taggers per domain (span and token F1).
    EvalTagger {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        model: Vec<String>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Tag tweets and extract anchors.
    Tag {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Flag cure tweets that mention no proven cure.
    DetectCure {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        /// One cure term per line; defaults to the proven-cure list.
        #[arg(long)]
        cure_lexicon: Option<PathBuf>,
    },
    /// Top-k stemmed anchor keywords and misinformation spread.
    Keywords {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Output of `tag` to take anchors from instead of the annotations.
        #[arg(long)]
        predicted: Option<PathBuf>,
        /// One keyword per line, stemmed on load.
        #[arg(long)]
        misinfo_keywords: Option<PathBuf>,
    },
    /// Lexicon features compared between misinformed and correct tweets.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated lexicon TSV files.
        #[arg(long)]
        lexicons: Option<String>,
    },
}

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn p(v: &Option<PathBuf>) -> Option<String> {
    v.as_ref().map(|p| p.display().to_string())
}

fn joined(v: &[String]) -> Option<String> {
    (!v.is_empty()).then(|| v.join(","))
}

impl TrainArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("epochs", s(&self.epochs)),
            ("batch_size", s(&self.batch_size)),
            ("learning_rate", s(&self.learning_rate)),
            ("patience", s(&self.patience)),
        ]
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Preprocess { .. } => "preprocess",
            Command::Split { .. } => "split",
            Command::TrainEmbeddings { .. } => "train-embeddings",
            Command::TrainRelevance { .. } => "train-relevance",
            Command::EvalRelevance { .. } => "eval-relevance",
            Command::TrainTagger { .. } => "train-tagger",
            Command::EvalTagger { .. } => "eval-tagger",
            Command::Tag { .. } => "tag",
            Command::DetectCure { .. } => "detect-cure",
            Command::Keywords { .. } => "keywords",
            Command::Compare { .. } => "compare",
        }
    }

    fn settings(&self) -> anyhow::Result<Settings> {
        let (common, mut pairs) = match self {
            Command::Preprocess { common, input, out, keep_hashtag_mark } => (
                common,
                vec![("in", p(input)), ("out", p(out)), ("keep_hashtag_mark", s(keep_hashtag_mark))],
            ),
            Command::Split { common, input, out } => (common, vec![("in", p(input)), ("out", p(out))]),
            Command::TrainEmbeddings { common, input, out, dim, window, negatives, epochs, min_count, learning_rate } => (
                common,
                vec![
                    ("in", p(input)),
                    ("out", p(out)),
                    ("dim", s(dim)),
                    ("window", s(window)),
                    ("negatives", s(negatives)),
                    ("epochs", s(epochs)),
                    ("min_count", s(min_count)),
                    ("learning_rate", s(learning_rate)),
                ],
            ),
            Command::TrainRelevance { common, input, out, split, category, mode, embeddings, hidden, train } => {
                let mut v = vec![
                    ("in", p(input)),
                    ("out", p(out)),
                    ("split", p(split)),
                    ("category", category.clone()),
                    ("mode", mode.clone()),
                    ("embeddings", p(embeddings)),
                    ("hidden", hidden.clone()),
                ];
                v.extend(train.pairs());
                (common, v)
            }
            Command::EvalRelevance { common, input, out, split, model, embeddings }
            | Command::EvalTagger { common, input, out, split, model, embeddings } => (
                common,
                vec![
                    ("in", p(input)),
                    ("out", p(out)),
                    ("split", p(split)),
                    ("model", joined(model)),
                    ("embeddings", p(embeddings)),
                ],
            ),
            Command::TrainTagger { common, input, out, split, category, variant, embeddings, hidden, features, train } => {
                let mut v = vec![
                    ("in", p(input)),
                    ("out", p(out)),
                    ("split", p(split)),
                    ("category", category.clone()),
                    ("variant", variant.clone()),
                    ("embeddings", p(embeddings)),
                    ("hidden", s(hidden)),
                    ("features", features.clone()),
                ];
                v.extend(train.pairs());
                (common, v)
            }
            Command::Tag { common, input, out, model, embeddings } => (
                common,
                vec![("in", p(input)), ("out", p(out)), ("model", model.clone()), ("embeddings", p(embeddings))],
            ),
            Command::DetectCure { common, input, out, embeddings, tau, cure_lexicon } => (
                common,
                vec![
                    ("in", p(input)),
                    ("out", p(out)),
                    ("embeddings", p(embeddings)),
                    ("tau", s(tau)),
                    ("cure_lexicon", p(cure_lexicon)),
                ],
            ),
            Command::Keywords { common, input, out, k, predicted, misinfo_keywords } => (
                common,
                vec![
                    ("in", p(input)),
                    ("out", p(out)),
                    ("k", s(k)),
                    ("predicted", p(predicted)),
                    ("misinfo_keywords", p(misinfo_keywords)),
                ],
            ),
            Command::Compare { common, input, out, lexicons } => (
                common,
                vec![("in", p(input)), ("out", p(out)), ("lexicons", lexicons.clone())],
            ),
        };
        pairs.push(("seed", s(&common.seed)));
        Settings::load(self.name(), common.config.as_deref(), pairs)
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = cli.command.settings().and_then(|s| commands::dispatch(cli.command.name(), &s));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}
