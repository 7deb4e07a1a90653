//! Teacher-forced multilingual training: pooled corpora, seeded shuffling,
//! length-bucketed batches, Adam with gradient clipping, loss logging and
//! per-epoch checkpoints.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::config::TrainingConfig;
use crate::corpus::{encode_batch, routing_token, SentencePair};
use crate::error::{Error, Result};
use crate::model::{batch_loss, ModelParams, SentenceExample, TapedModel};
use crate::optim::{adam_step_refs, clip_global_norm, AdamState};
use crate::rng::{RngSnapshot, SeededRng};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::vocab::Vocabulary;

/// One language pair's preprocessed sentence pairs.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub source_lang: String,
    pub target_lang: String,
    pub pairs: Vec<SentencePair>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// When set, a checkpoint is written here after every epoch
    /// (`checkpoint_epoch_NNN.ckpt`) plus a final `model.ckpt`.
    pub checkpoint_dir: Option<PathBuf>,
}

/// The result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub adam: AdamState,
    /// `(epoch, token-weighted mean per-token loss)` per epoch, 1-based.
    pub loss_log: Vec<(usize, f64)>,
    pub rng: RngSnapshot,
}

/// Statistics of one optimization step, used by the trainer and by tests of
/// the training contracts.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub loss: f64,
    pub tokens: usize,
    /// Token ids the decoder actually consumed, per sentence: under teacher
    /// forcing these must equal the gold `target_in` sequences.
    pub decoder_inputs: Vec<Vec<usize>>,
    pub grad_norm_preclip: f64,
    pub grad_norm_postclip: f64,
}

/// Trains the shared model over all corpora pooled together.
///
/// Every corpus must already be preprocessed: length-filtered and
/// routing-token-prepended on the source side. The vocabulary must cover all
/// corpora (it is the shared one built over them).
pub fn train(
    corpora: &[LabeledCorpus],
    vocab: &Vocabulary,
    config: &TrainingConfig,
    init_embedding: Option<Tensor>,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    let pool = pooled_pairs(corpora)?;

    let mut rng = SeededRng::new(config.seed);
    let mut params = ModelParams::init(
        config.model_config(vocab.len()),
        vocab.content_hash(),
        &mut rng,
        init_embedding,
    )?;
    let sizes: Vec<usize> = params.named().iter().map(|(_, t)| t.numel()).collect();
    let mut adam = AdamState::with_sizes(
        sizes,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
        config.amsgrad,
    );

    let mut loss_log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let batches = plan_epoch(&pool, config.batch_size, &mut rng);
        let mut loss_sum = 0.0;
        let mut token_sum = 0usize;
        for (batch_index, batch) in batches.iter().enumerate() {
            let pairs: Vec<SentencePair> = batch.iter().map(|&i| pool[i].clone()).collect();
            let stats = run_batch(&pairs, vocab, config, &mut params, &mut adam)
                .map_err(|e| annotate_batch(e, epoch, batch_index))?;
            if !stats.loss.is_finite() {
                return Err(Error::numeric(format!(
                    "training diverged: loss {} in epoch {epoch}, batch {batch_index}",
                    stats.loss
                )));
            }
            for (fed, &i) in stats.decoder_inputs.iter().zip(batch.iter()) {
                let gold = &pool[i];
                if !teacher_forced(fed, gold, vocab) {
                    return Err(Error::state(format!(
                        "decoder input diverged from the gold target in epoch {epoch}, batch {batch_index}"
                    )));
                }
            }
            loss_sum += stats.loss * stats.tokens as f64;
            token_sum += stats.tokens;
        }
        let mean = loss_sum / token_sum.max(1) as f64;
        loss_log.push((epoch, mean));

        if let Some(dir) = &options.checkpoint_dir {
            let ckpt = Checkpoint {
                config: config.clone(),
                vocab_hash: vocab.content_hash(),
                epoch,
                params: params.clone(),
                adam: adam.clone(),
                rng: rng.snapshot(),
            };
            save_checkpoint(&dir.join(format!("checkpoint_epoch_{epoch:03}.ckpt")), &ckpt)?;
            if epoch == config.epochs {
                save_checkpoint(&dir.join("model.ckpt"), &ckpt)?;
            }
        }
    }

    Ok(TrainOutcome { params, adam, loss_log, rng: rng.snapshot() })
}

fn annotate_batch(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric(msg) => {
            Error::Numeric(format!("{msg} (epoch {epoch}, batch {batch})"))
        }
        other => other,
    }
}

fn pooled_pairs(corpora: &[LabeledCorpus]) -> Result<Vec<SentencePair>> {
    let mut pool = Vec::new();
    for corpus in corpora {
        for pair in &corpus.pairs {
            let expected = routing_token(&corpus.target_lang);
            if pair.source_tokens.first().map(String::as_str) != Some(expected.as_str()) {
                return Err(Error::contract(format!(
                    "corpus {}-{} contains a pair whose source does not start with {expected}; \
                     preprocess corpora before training",
                    corpus.source_lang, corpus.target_lang
                )));
            }
            if pair.target_tokens.is_empty() || pair.source_tokens.len() < 2 {
                return Err(Error::contract(
                    "training pairs must have nonempty source and target".to_string(),
                ));
            }
            pool.push(pair.clone());
        }
    }
    if pool.is_empty() {
        return Err(Error::contract("no training pairs in any corpus".to_string()));
    }
    Ok(pool)
}

/// Epoch plan: shuffle the pool, stable-sort by source length so batches pad
/// little, chunk, then shuffle the batch order.
fn plan_epoch(pool: &[SentencePair], batch_size: usize, rng: &mut SeededRng) -> Vec<Vec<usize>> {
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    rng.shuffle(&mut indices);
    indices.sort_by_key(|&i| pool[i].source_tokens.len());
    let mut batches: Vec<Vec<usize>> =
        indices.chunks(batch_size).map(|c| c.to_vec()).collect();
    rng.shuffle(&mut batches);
    batches
}

fn teacher_forced(fed: &[usize], gold: &SentencePair, vocab: &Vocabulary) -> bool {
    let mut expected = vec![crate::vocab::BOS_ID];
    expected.extend(gold.target_tokens.iter().map(|t| vocab.encode_token(t)));
    fed == expected
}

/// One optimization step over a batch of sentence pairs: forward on a fresh
/// tape, one backward, clip to the global-norm cap, Adam update.
pub fn run_batch(
    pairs: &[SentencePair],
    vocab: &Vocabulary,
    config: &TrainingConfig,
    params: &mut ModelParams,
    adam: &mut AdamState,
) -> Result<BatchStats> {
    let batch = encode_batch(pairs, vocab)?;
    let mut sentences = Vec::with_capacity(batch.len());
    for b in 0..batch.len() {
        let tokens = batch.mask[b].iter().filter(|&&m| m).count();
        sentences.push(SentenceExample {
            source_ids: batch.source_ids[b][..batch.source_lengths[b]].to_vec(),
            target_in: batch.target_in[b][..tokens].to_vec(),
            target_out: batch.target_out[b][..tokens].to_vec(),
            mask: batch.mask[b][..tokens].to_vec(),
        });
    }

    let mut tape = Tape::new();
    let (model, ids) = TapedModel::register(&mut tape, params)?;
    let forward = batch_loss(&mut tape, &model, &sentences)?;
    let loss = tape.scalar_value(forward.loss)?;
    if !loss.is_finite() {
        return Err(Error::numeric(format!("batch loss is not finite: {loss}")));
    }
    let grad_map = tape.backward(forward.loss)?;
    let mut grads: Vec<Vec<f64>> =
        ids.iter().map(|&id| grad_map.expect(id).to_vec()).collect();

    let preclip = clip_global_norm(&mut grads, config.clip_norm);
    let postclip: f64 =
        grads.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();

    let mut tensors: Vec<&mut Tensor> =
        params.named_mut().into_iter().map(|(_, t)| t).collect();
    adam_step_refs(&mut tensors, &grads, adam)?;

    Ok(BatchStats {
        loss,
        tokens: forward.tokens,
        decoder_inputs: forward.decoder_inputs,
        grad_norm_preclip: preclip,
        grad_norm_postclip: postclip,
    })
}

/// Renders the loss log as CSV (`epoch,mean_loss`, one row per epoch, losses
/// at 6 significant digits).
pub fn emit_loss_log(log: &[(usize, f64)]) -> Result<String> {
    if log.is_empty() {
        return Err(Error::contract("loss log is empty".to_string()));
    }
    let mut out = String::from("epoch,mean_loss\n");
    for (epoch, loss) in log {
        out.push_str(&format!("{epoch},{loss:.5e}\n"));
    }
    Ok(out)
}

pub fn write_loss_log(path: &Path, log: &[(usize, f64)]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(emit_loss_log(log)?.as_bytes())?;
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LanguageSet;

    /// A tiny copy-task corpus: target equals source, routing token prepended.
    fn copy_corpus(n_pairs: usize, vocab_symbols: usize, seed: u64) -> (LabeledCorpus, Vocabulary) {
        let langs = LanguageSet::new(&["xx".to_string(), "yy".to_string()]).unwrap();
        let mut rng = SeededRng::new(seed);
        let mut pairs = Vec::with_capacity(n_pairs);
        for _ in 0..n_pairs {
            let len = 4 + rng.below(3);
            let tokens: Vec<String> =
                (0..len).map(|_| format!("s{}", rng.below(vocab_symbols))).collect();
            pairs.push(SentencePair {
                source_tokens: tokens.clone(),
                target_tokens: tokens,
                source_lang: "xx".to_string(),
                target_lang: "yy".to_string(),
            });
        }
        let vocab = Vocabulary::build(&[&pairs], &langs, 1, 10_000).unwrap();
        for p in &mut pairs {
            p.source_tokens =
                crate::corpus::prepend_lang_token(&p.source_tokens, "yy", &langs).unwrap();
        }
        (
            LabeledCorpus {
                source_lang: "xx".to_string(),
                target_lang: "yy".to_string(),
                pairs,
            },
            vocab,
        )
    }

    fn small_config(epochs: usize) -> TrainingConfig {
        let mut config = TrainingConfig::default();
        config.epochs = epochs;
        config.hidden = 32;
        config.embed_dim = 16;
        config.layers = 2;
        config.batch_size = 2;
        config.seed = 7;
        config
    }

    #[test]
    fn rejects_invalid_config_and_unprepended_corpora() {
        let (corpus, vocab) = copy_corpus(4, 5, 1);
        let mut config = small_config(1);
        config.epochs = 0;
        assert!(matches!(
            train(&[corpus.clone()], &vocab, &config, None, &TrainOptions::default()),
            Err(Error::Contract(_))
        ));

        let mut bad = corpus;
        for p in &mut bad.pairs {
            p.source_tokens.remove(0);
        }
        let config = small_config(1);
        assert!(matches!(
            train(&[bad], &vocab, &config, None, &TrainOptions::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn loss_decreases_on_a_memorizable_corpus() {
        let (corpus, vocab) = copy_corpus(24, 6, 3);
        let mut config = small_config(60);
        config.batch_size = 1;
        let outcome =
            train(&[corpus], &vocab, &config, None, &TrainOptions::default()).unwrap();
        assert_eq!(outcome.loss_log.len(), 60);
        let first = outcome.loss_log.first().unwrap().1;
        let last = outcome.loss_log.last().unwrap().1;
        assert!(last < first * 0.5, "loss should drop: {first} -> {last}");
        assert_eq!(outcome.adam.step_count as usize, 60 * 24);
    }

    #[test]
    fn identical_seeds_give_identical_loss_logs_and_parameters() {
        let (corpus, vocab) = copy_corpus(12, 5, 5);
        let config = small_config(3);
        let a = train(&[corpus.clone()], &vocab, &config, None, &TrainOptions::default())
            .unwrap();
        let b = train(&[corpus], &vocab, &config, None, &TrainOptions::default()).unwrap();
        assert_eq!(a.loss_log, b.loss_log);
        for ((na, ta), (nb, tb)) in a.params.named().iter().zip(b.params.named().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data(), "parameter {na} differs");
        }
        assert_eq!(a.rng, b.rng);
    }

    #[test]
    fn batches_are_teacher_forced_and_clipped() {
        let (corpus, vocab) = copy_corpus(6, 5, 9);
        let config = small_config(1);
        let mut rng = SeededRng::new(config.seed);
        let mut params = ModelParams::init(
            config.model_config(vocab.len()),
            vocab.content_hash(),
            &mut rng,
            None,
        )
        .unwrap();
        let sizes: Vec<usize> = params.named().iter().map(|(_, t)| t.numel()).collect();
        let mut adam = AdamState::with_sizes(sizes, 0.001, 0.9, 0.999, 1e-7, false);
        let stats = run_batch(&corpus.pairs, &vocab, &config, &mut params, &mut adam).unwrap();

        assert_eq!(stats.decoder_inputs.len(), corpus.pairs.len());
        for (fed, pair) in stats.decoder_inputs.iter().zip(&corpus.pairs) {
            assert_eq!(fed[0], crate::vocab::BOS_ID);
            let gold: Vec<usize> =
                pair.target_tokens.iter().map(|t| vocab.encode_token(t)).collect();
            assert_eq!(&fed[1..], &gold[..]);
        }
        assert!(stats.grad_norm_postclip <= config.clip_norm + 1e-9);
        assert!(stats.tokens > 0);
    }

    #[test]
    fn no_per_language_pair_parameters_exist() {
        // The routing token must be the only signal of the target language:
        // the parameter name set depends only on the layer count, never on
        // which or how many language pairs are trained.
        let (corpus_a, vocab) = copy_corpus(4, 5, 11);
        let mut corpus_b = corpus_a.clone();
        corpus_b.source_lang = "yy".to_string();
        corpus_b.target_lang = "yy".to_string();

        let config = small_config(1);
        let outcome = train(
            &[corpus_a, corpus_b],
            &vocab,
            &config,
            None,
            &TrainOptions::default(),
        )
        .unwrap();
        let names = outcome.params.names();
        let expected = {
            let mut rng = SeededRng::new(0);
            ModelParams::init(config.model_config(vocab.len()), 0, &mut rng, None)
                .unwrap()
                .names()
        };
        assert_eq!(names, expected);
        for name in &names {
            assert!(!name.contains("xx") && !name.contains("yy"), "{name}");
        }
    }

    #[test]
    fn per_epoch_checkpoints_are_written_and_loadable() {
        let (corpus, vocab) = copy_corpus(6, 4, 13);
        let config = small_config(2);
        let dir = tempfile::tempdir().unwrap();
        let options = TrainOptions { checkpoint_dir: Some(dir.path().to_path_buf()) };
        let outcome = train(&[corpus], &vocab, &config, None, &options).unwrap();

        for epoch in 1..=2 {
            let path = dir.path().join(format!("checkpoint_epoch_{epoch:03}.ckpt"));
            let ckpt = crate::checkpoint::load_checkpoint(&path).unwrap();
            assert_eq!(ckpt.epoch, epoch);
            ckpt.verify_vocab(&vocab).unwrap();
        }
        let last = crate::checkpoint::load_checkpoint(&dir.path().join("model.ckpt")).unwrap();
        assert_eq!(last.params, outcome.params);
        assert_eq!(last.adam, outcome.adam);
        assert_eq!(last.rng, outcome.rng);
    }

    #[test]
    fn loss_log_csv_has_header_and_six_significant_digits() {
        let log: Vec<(usize, f64)> =
            (1..=10).map(|e| (e, 1.0 / e as f64)).collect();
        let csv = emit_loss_log(&log).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], "epoch,mean_loss");
        for (line, (epoch, loss)) in lines[1..].iter().zip(&log) {
            let (e, l) = line.split_once(',').unwrap();
            assert_eq!(e.parse::<usize>().unwrap(), *epoch);
            let parsed: f64 = l.parse().unwrap();
            let rel = (parsed - loss).abs() / loss.abs();
            assert!(rel < 5e-6, "{parsed} vs {loss}");
        }
        // A noisy, non-monotone log is perfectly acceptable.
        let noisy = vec![(1, 0.5), (2, 0.8), (3, 0.2)];
        assert!(emit_loss_log(&noisy).is_ok());
        assert!(matches!(emit_loss_log(&[]), Err(Error::Contract(_))));
    }
}
