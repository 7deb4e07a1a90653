//! Implementations of the pipeline subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use zst_core::checkpoint::load_checkpoint_for_vocab;
use zst_core::config::{parse_config_file, TrainingConfig};
use zst_core::corpus::{
    filter_by_length, load_aligned_files, load_tsv, prepend_lang_token,
    read_utf8_lines, stem_hindi, tokenize, LanguageSet, SentencePair,
};
use zst_core::embeddings::{build_matrix, compress_with, load_vec, save_vec, CompressOptions};
use zst_core::error::{Error, Result};
use zst_core::evaluation::{bleu, BleuReport};
use zst_core::inference::{export_attention, greedy_translate};
use zst_core::training::{train as train_model, write_loss_log, LabeledCorpus, TrainOptions};
use zst_core::vocab::Vocabulary;

use crate::manifest::{write_manifest, Manifest};
use crate::HyperFlags;

/// defaults <- config file <- explicit flags.
pub fn resolve_config(hyper: &HyperFlags) -> Result<TrainingConfig> {
    resolve_config_from(TrainingConfig::default(), hyper)
}

/// Like [`resolve_config`] but starting from a command-specific base.
pub fn resolve_config_from(base: TrainingConfig, hyper: &HyperFlags) -> Result<TrainingConfig> {
    let mut config = base;
    if let Some(path) = &hyper.config {
        config.apply_file(&parse_config_file(path)?)?;
    }
    let mut flag = |key: &str, value: Option<String>| -> Result<()> {
        if let Some(v) = value {
            config.apply_key(key, &v)?;
        }
        Ok(())
    };
    flag("learning-rate", hyper.learning_rate.map(|v| v.to_string()))?;
    flag("beta1", hyper.beta1.map(|v| v.to_string()))?;
    flag("beta2", hyper.beta2.map(|v| v.to_string()))?;
    flag("epsilon", hyper.epsilon.map(|v| v.to_string()))?;
    flag("amsgrad", hyper.amsgrad.map(|v| v.to_string()))?;
    flag("epochs", hyper.epochs.map(|v| v.to_string()))?;
    flag("batch-size", hyper.batch_size.map(|v| v.to_string()))?;
    flag("hidden", hyper.hidden.map(|v| v.to_string()))?;
    flag("embed-dim", hyper.embed_dim.map(|v| v.to_string()))?;
    flag("layers", hyper.layers.map(|v| v.to_string()))?;
    flag("bidirectional", hyper.bidirectional.map(|v| v.to_string()))?;
    flag("max-sentence-len", hyper.max_sentence_len.map(|v| v.to_string()))?;
    flag("clip-norm", hyper.clip_norm.map(|v| v.to_string()))?;
    flag("seed", hyper.seed.map(|v| v.to_string()))?;
    flag("max-decode-len", hyper.max_decode_len.map(|v| v.to_string()))?;
    flag("bleu-smoothing", hyper.bleu_smoothing.clone())?;
    config.validate()?;
    Ok(config)
}

struct CorpusSpec {
    source_lang: String,
    target_lang: String,
    path: PathBuf,
}

fn parse_pair_spec(spec: &str) -> Result<CorpusSpec> {
    let parts: Vec<&str> = spec.splitn(3, ':').collect();
    if parts.len() != 3 {
        return Err(Error::config(format!(
            "corpus spec {spec:?} must be SRC:TGT:PATH"
        )));
    }
    Ok(CorpusSpec {
        source_lang: parts[0].to_string(),
        target_lang: parts[1].to_string(),
        path: PathBuf::from(parts[2]),
    })
}

fn load_raw_pairs(spec: &CorpusSpec) -> Result<Vec<(String, String)>> {
    if spec.path.extension().map(|e| e == "tsv").unwrap_or(false) {
        load_tsv(&spec.path)
    } else {
        load_aligned_files(&spec.path, &spec.source_lang, &spec.target_lang)
    }
}

pub fn preprocess(
    pair_specs: &[String],
    out_dir: &Path,
    min_count: usize,
    max_size: usize,
    apply_stemmer: bool,
    hyper: &HyperFlags,
) -> Result<()> {
    let config = resolve_config(hyper)?;
    std::fs::create_dir_all(out_dir)?;

    let specs: Vec<CorpusSpec> =
        pair_specs.iter().map(|s| parse_pair_spec(s)).collect::<Result<_>>()?;
    let mut codes: Vec<String> = Vec::new();
    for spec in &specs {
        codes.push(spec.source_lang.clone());
        codes.push(spec.target_lang.clone());
    }
    let languages = LanguageSet::new(&codes)?;

    let mut report = String::new();
    let mut corpora: Vec<(String, String, Vec<SentencePair>)> = Vec::new();
    let mut total_before = 0usize;
    let mut total_after = 0usize;
    for spec in &specs {
        let raw = load_raw_pairs(spec)?;
        if raw.is_empty() {
            return Err(Error::contract(format!(
                "corpus {} is empty",
                spec.path.display()
            )));
        }
        let tokenized: Vec<SentencePair> = raw
            .iter()
            .map(|(src, tgt)| {
                let mut source_tokens = tokenize(src);
                let mut target_tokens = tokenize(tgt);
                if apply_stemmer {
                    source_tokens = stem_hindi(&source_tokens);
                    target_tokens = stem_hindi(&target_tokens);
                }
                SentencePair {
                    source_tokens,
                    target_tokens,
                    source_lang: spec.source_lang.clone(),
                    target_lang: spec.target_lang.clone(),
                }
            })
            .filter(|p| !p.source_tokens.is_empty() && !p.target_tokens.is_empty())
            .collect();
        let before = tokenized.len();
        let kept = filter_by_length(tokenized, config.max_sentence_len)?;
        let after = kept.len();
        total_before += before;
        total_after += after;
        report.push_str(&format!(
            "pair {}-{}: pairs_before={before} pairs_after={after} removed: {}\n",
            spec.source_lang,
            spec.target_lang,
            before - after
        ));
        corpora.push((spec.source_lang.clone(), spec.target_lang.clone(), kept));
    }

    let views: Vec<&[SentencePair]> = corpora.iter().map(|(_, _, p)| p.as_slice()).collect();
    let vocab = Vocabulary::build(&views, &languages, min_count, max_size)?;
    report.push_str(&format!(
        "total: pairs_before={total_before} pairs_after={total_after} removed: {}\n",
        total_before - total_after
    ));
    report.push_str(&format!("vocab_size={}\n", vocab.len()));

    let mut outputs = vec!["vocab.txt".to_string(), "preprocess.report.txt".to_string()];
    vocab.save(&out_dir.join("vocab.txt"))?;
    for (src, tgt, pairs) in &corpora {
        let name = format!("{src}-{tgt}.tsv");
        let mut file =
            std::io::BufWriter::new(std::fs::File::create(out_dir.join(&name))?);
        for pair in pairs {
            let routed = prepend_lang_token(&pair.source_tokens, tgt, &languages)?;
            writeln!(file, "{}\t{}", routed.join(" "), pair.target_tokens.join(" "))?;
        }
        file.flush()?;
        outputs.push(name);
    }
    std::fs::write(out_dir.join("preprocess.report.txt"), &report)?;
    print!("{report}");

    write_manifest(
        out_dir,
        &Manifest {
            command: "preprocess",
            config_file: hyper.config.as_deref(),
            config: Some(&config),
            seed: Some(config.seed),
            inputs: specs.iter().map(|s| s.path.clone()).collect(),
            outputs,
        },
    )
}

pub fn compress_embeddings(
    input: &Path,
    out_dir: &Path,
    name: &str,
    target_dim: Option<usize>,
    components: Option<usize>,
    no_postprocess: bool,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let table = load_vec(input)?;
    let target = target_dim.unwrap_or(table.dim() / 2);
    let compressed = compress_with(
        &table,
        target,
        CompressOptions { postprocess: !no_postprocess, components },
    )?;
    save_vec(&compressed, &out_dir.join(name))?;
    println!(
        "compressed {} words: {} -> {} dims ({} -> {} floats), {} malformed lines skipped",
        table.n_words(),
        table.dim(),
        compressed.dim(),
        table.stored_floats(),
        compressed.stored_floats(),
        table.skipped_lines
    );
    write_manifest(
        out_dir,
        &Manifest {
            command: "compress-embeddings",
            config_file: None,
            config: None,
            seed: None,
            inputs: vec![input.to_path_buf()],
            outputs: vec![name.to_string()],
        },
    )
}

/// Reads a preprocessed data directory: every `<src>-<tgt>.tsv` next to a
/// `vocab.txt`. The TSVs hold already-tokenized, routing-prepended rows.
fn load_preprocessed(data: &Path) -> Result<(Vec<LabeledCorpus>, Vocabulary)> {
    let vocab = Vocabulary::load(&data.join("vocab.txt"))?;
    let mut corpora = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(data)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "tsv").unwrap_or(false))
        .collect();
    entries.sort();
    for path in entries {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::format(format!("bad corpus file name {path:?}")))?;
        let (src, tgt) = stem.split_once('-').ok_or_else(|| {
            Error::format(format!(
                "corpus file {path:?} must be named <src>-<tgt>.tsv"
            ))
        })?;
        let rows = load_tsv(&path)?;
        let pairs: Vec<SentencePair> = rows
            .iter()
            .map(|(s, t)| SentencePair {
                source_tokens: s.split_whitespace().map(String::from).collect(),
                target_tokens: t.split_whitespace().map(String::from).collect(),
                source_lang: src.to_string(),
                target_lang: tgt.to_string(),
            })
            .collect();
        corpora.push(LabeledCorpus {
            source_lang: src.to_string(),
            target_lang: tgt.to_string(),
            pairs,
        });
    }
    if corpora.is_empty() {
        return Err(Error::contract(format!(
            "no <src>-<tgt>.tsv corpora found in {}",
            data.display()
        )));
    }
    Ok((corpora, vocab))
}

pub fn train(
    data: &Path,
    out_dir: &Path,
    embeddings: Option<&Path>,
    hyper: &HyperFlags,
) -> Result<()> {
    let config = resolve_config(hyper)?;
    std::fs::create_dir_all(out_dir)?;
    let (corpora, vocab) = load_preprocessed(data)?;

    let init_embedding = match embeddings {
        Some(path) => {
            let table = load_vec(path)?;
            Some(build_matrix(&vocab, &table, config.embed_dim, config.seed)?)
        }
        None => None,
    };

    let options = TrainOptions { checkpoint_dir: Some(out_dir.to_path_buf()) };
    let outcome = train_model(&corpora, &vocab, &config, init_embedding, &options)?;
    write_loss_log(&out_dir.join("loss.csv"), &outcome.loss_log)?;

    for (epoch, loss) in &outcome.loss_log {
        println!("epoch {epoch}: mean_loss={loss:.6}");
    }

    let mut outputs = vec!["loss.csv".to_string(), "model.ckpt".to_string()];
    for epoch in 1..=config.epochs {
        outputs.push(format!("checkpoint_epoch_{epoch:03}.ckpt"));
    }
    let mut inputs = vec![data.to_path_buf()];
    if let Some(path) = embeddings {
        inputs.push(path.to_path_buf());
    }
    write_manifest(
        out_dir,
        &Manifest {
            command: "train",
            config_file: hyper.config.as_deref(),
            config: Some(&config),
            seed: Some(config.seed),
            inputs,
            outputs,
        },
    )
}

pub fn translate(
    checkpoint: &Path,
    vocab_path: &Path,
    target_lang: &str,
    input: Option<&Path>,
    sentence: Option<&str>,
    out_dir: &Path,
    attention: bool,
    hyper: &HyperFlags,
) -> Result<()> {
    let config = resolve_config(hyper)?;
    std::fs::create_dir_all(out_dir)?;
    let vocab = Vocabulary::load(vocab_path)?;
    let ckpt = load_checkpoint_for_vocab(checkpoint, &vocab)?;

    let lines: Vec<String> = match (input, sentence) {
        (Some(path), None) => read_utf8_lines(path)?,
        (None, Some(s)) => vec![s.to_string()],
        _ => {
            return Err(Error::config(
                "provide exactly one of --input or --sentence".to_string(),
            ))
        }
    };
    if lines.is_empty() {
        return Err(Error::contract("input file has no lines".to_string()));
    }

    let mut outputs = vec!["translations.txt".to_string()];
    let mut out_file =
        std::io::BufWriter::new(std::fs::File::create(out_dir.join("translations.txt"))?);
    for (i, line) in lines.iter().enumerate() {
        let tokens = tokenize(line);
        if tokens.is_empty() {
            writeln!(out_file)?;
            println!();
            continue;
        }
        let translation =
            greedy_translate(&tokens, target_lang, &ckpt.params, &vocab, config.max_decode_len)?;
        let text = translation.tokens.join(" ");
        writeln!(out_file, "{text}")?;
        println!("{text}");
        if attention {
            let name = format!("attention_{i:04}.csv");
            std::fs::write(out_dir.join(&name), export_attention(&translation))?;
            outputs.push(name);
        }
    }
    out_file.flush()?;

    write_manifest(
        out_dir,
        &Manifest {
            command: "translate",
            config_file: hyper.config.as_deref(),
            config: Some(&config),
            seed: Some(config.seed),
            inputs: input
                .map(|p| vec![checkpoint.to_path_buf(), vocab_path.to_path_buf(), p.to_path_buf()])
                .unwrap_or_else(|| vec![checkpoint.to_path_buf(), vocab_path.to_path_buf()]),
            outputs,
        },
    )
}

fn whitespace_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_utf8_lines(path)?
        .into_iter()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

pub fn evaluate(
    hypotheses: &Path,
    references: &Path,
    out_dir: &Path,
    csv: bool,
    percent: bool,
    hyper: &HyperFlags,
) -> Result<()> {
    let config = resolve_config(hyper)?;
    std::fs::create_dir_all(out_dir)?;
    let hyp = whitespace_corpus(hypotheses)?;
    let refs = whitespace_corpus(references)?;
    let report = bleu(&hyp, &refs, config.bleu_smoothing)?;

    let rendered = report.render(percent);
    print!("{rendered}");
    std::fs::write(out_dir.join("bleu.txt"), &rendered)?;
    let mut outputs = vec!["bleu.txt".to_string()];
    if csv {
        let csv_text = format!("{}\n{}\n", BleuReport::csv_header(), report.csv_row());
        std::fs::write(out_dir.join("bleu.csv"), csv_text)?;
        outputs.push("bleu.csv".to_string());
    }

    write_manifest(
        out_dir,
        &Manifest {
            command: "evaluate",
            config_file: hyper.config.as_deref(),
            config: Some(&config),
            seed: None,
            inputs: vec![hypotheses.to_path_buf(), references.to_path_buf()],
            outputs,
        },
    )
}
