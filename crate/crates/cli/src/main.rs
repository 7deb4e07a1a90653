//! `zst` — the command-line front end of the zero-shot translation toolkit.
//!
//! Subcommands mirror the pipeline: `preprocess`, `compress-embeddings`,
//! `train`, `translate`, `evaluate`, plus a self-contained `zeroshot-demo`.
//! Every command resolves its settings as defaults <- config file <- flags,
//! writes its artifacts under `--out-dir` and leaves a `manifest.txt` there
//! recording exactly what ran.
//!
//! Exit codes: 0 success, 1 contract/validation error (including a failed
//! demo gate), 2 I/O or format error.

mod commands;
mod demo;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zst_core::Error;

#[derive(Parser)]
#[command(name = "zst", version, about = "Zero-shot multilingual translation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Hyperparameter flags shared by the commands that build or train models.
/// Flag names mirror the config-file keys; a flag overrides the file.
#[derive(Args, Debug, Default, Clone)]
pub struct HyperFlags {
    /// key=value config file (kebab-case keys, # comments)
    #[arg(long, global = false)]
    config: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    amsgrad: Option<bool>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    bidirectional: Option<bool>,
    #[arg(long)]
    max_sentence_len: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_decode_len: Option<usize>,
    #[arg(long)]
    bleu_smoothing: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize, length-filter, prepend routing tokens and build the shared vocabulary
    Preprocess {
        /// Corpus spec `SRC:TGT:PATH`; PATH is a .tsv file or the base of
        /// aligned PATH.SRC / PATH.TGT line files. Repeatable.
        #[arg(long = "pair", required = true)]
        pairs: Vec<String>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Minimum corpus frequency for a vocabulary token
        #[arg(long, default_value_t = 1)]
        min_count: usize,
        /// Total vocabulary cap, reserved tokens included
        #[arg(long, default_value_t = 50_000)]
        max_size: usize,
        /// Apply the built-in Hindi suffix stemmer to Devanagari tokens
        #[arg(long, default_value_t = false)]
        stem_hindi: bool,
        #[command(flatten)]
        hyper: HyperFlags,
    },
    /// Halve pretrained embedding dimensions via PCA with post-processing
    CompressEmbeddings {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Output file name inside --out-dir
        #[arg(long, default_value = "compressed.vec")]
        name: String,
        /// Output dimension; default is half the input dimension
        #[arg(long)]
        target_dim: Option<usize>,
        /// Dominant components removed per post-processing stage
        #[arg(long)]
        components: Option<usize>,
        /// Skip the mean-subtraction + component-removal stages
        #[arg(long, default_value_t = false)]
        no_postprocess: bool,
    },
    /// Train the shared multilingual model on preprocessed corpora
    Train {
        /// Directory produced by `preprocess` (pair TSVs + vocab.txt)
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Optional pretrained .vec file for the initial embedding matrix
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        hyper: HyperFlags,
    },
    /// Greedily translate text with a trained checkpoint
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        target_lang: String,
        /// UTF-8 text file, one sentence per line
        #[arg(long, conflicts_with = "sentence")]
        input: Option<PathBuf>,
        /// Translate a single sentence given inline
        #[arg(long)]
        sentence: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write one attention CSV per input line
        #[arg(long, default_value_t = false)]
        attention: bool,
        #[command(flatten)]
        hyper: HyperFlags,
    },
    /// Corpus-level BLEU of line-aligned hypothesis/reference files
    Evaluate {
        #[arg(long)]
        hypotheses: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also append a CSV row to bleu.csv in --out-dir
        #[arg(long, default_value_t = false)]
        csv: bool,
        /// Display scores as percentages
        #[arg(long, default_value_t = false)]
        percent: bool,
        #[command(flatten)]
        hyper: HyperFlags,
    },
    /// Self-contained zero-shot demonstration on synthetic languages
    ZeroshotDemo {
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        hyper: HyperFlags,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Format { .. } | Error::Encoding { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Preprocess { pairs, out_dir, min_count, max_size, stem_hindi, hyper } => {
            commands::preprocess(&pairs, &out_dir, min_count, max_size, stem_hindi, &hyper)
        }
        Command::CompressEmbeddings { input, out_dir, name, target_dim, components, no_postprocess } => {
            commands::compress_embeddings(&input, &out_dir, &name, target_dim, components, no_postprocess)
        }
        Command::Train { data, out_dir, embeddings, hyper } => {
            commands::train(&data, &out_dir, embeddings.as_deref(), &hyper)
        }
        Command::Translate { checkpoint, vocab, target_lang, input, sentence, out_dir, attention, hyper } => {
            commands::translate(
                &checkpoint,
                &vocab,
                &target_lang,
                input.as_deref(),
                sentence.as_deref(),
                &out_dir,
                attention,
                &hyper,
            )
        }
        Command::Evaluate { hypotheses, references, out_dir, csv, percent, hyper } => {
            commands::evaluate(&hypotheses, &references, &out_dir, csv, percent, &hyper)
        }
        Command::ZeroshotDemo { out_dir, hyper } => demo::run(&out_dir, &hyper),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
