//! Training configuration and the key=value config-file format.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::DEFAULT_MAX_SENTENCE_LEN;
use crate::error::{Error, Result};
use crate::evaluation::Smoothing;
use crate::inference::DEFAULT_MAX_DECODE_LEN;
use crate::model::ModelConfig;

/// Hyperparameters of a training run. Defaults follow the toolkit's standard
/// settings: Adam at 0.001 with betas 0.9/0.999 and epsilon 1e-7, hidden
/// size 128, 4 bidirectional layers, 150-dim embeddings, 30-token sentence
/// cap and gradient clipping at global norm 5. The default batch size is 1
/// (per-sentence updates): at the fixed 0.001 learning rate, desk-scale
/// corpora need the extra optimizer steps far more than they need the
/// throughput of larger batches.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub amsgrad: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub bidirectional: bool,
    pub max_sentence_len: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub max_decode_len: usize,
    pub bleu_smoothing: Smoothing,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            amsgrad: false,
            epochs: 10,
            batch_size: 1,
            hidden: 128,
            embed_dim: 150,
            layers: 4,
            bidirectional: true,
            max_sentence_len: DEFAULT_MAX_SENTENCE_LEN,
            clip_norm: 5.0,
            seed: 42,
            max_decode_len: DEFAULT_MAX_DECODE_LEN,
            bleu_smoothing: Smoothing::None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::contract("epochs must be at least 1".to_string()));
        }
        for (name, v) in [
            ("learning-rate", self.learning_rate),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
            ("clip-norm", self.clip_norm),
        ] {
            if !(v > 0.0) {
                return Err(Error::contract(format!("{name} must be positive, got {v}")));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::contract("beta1 and beta2 must be below 1".to_string()));
        }
        for (name, v) in [
            ("batch-size", self.batch_size),
            ("hidden", self.hidden),
            ("embed-dim", self.embed_dim),
            ("layers", self.layers),
            ("max-sentence-len", self.max_sentence_len),
            ("max-decode-len", self.max_decode_len),
        ] {
            if v == 0 {
                return Err(Error::contract(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// The model dimensions this configuration implies.
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            attn_dim: self.hidden,
            layers: self.layers,
            bidirectional: self.bidirectional,
        }
    }

    /// Applies one kebab-case key (as used in config files and CLI flags).
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                Error::config(format!("invalid value {value:?} for config key {key:?}"))
            })
        }
        match key {
            "learning-rate" => self.learning_rate = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "amsgrad" => self.amsgrad = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch-size" => self.batch_size = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "embed-dim" => self.embed_dim = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "bidirectional" => self.bidirectional = parse(key, value)?,
            "max-sentence-len" => self.max_sentence_len = parse(key, value)?,
            "clip-norm" => self.clip_norm = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "max-decode-len" => self.max_decode_len = parse(key, value)?,
            "bleu-smoothing" => self.bleu_smoothing = value.parse()?,
            other => {
                return Err(Error::config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    /// Applies every key of a parsed config file.
    pub fn apply_file(&mut self, entries: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in entries {
            self.apply_key(key, value)?;
        }
        Ok(())
    }

    /// Resolved values as kebab-case key=value pairs (manifests, checkpoints).
    pub fn entries(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("learning-rate".into(), format!("{}", self.learning_rate));
        map.insert("beta1".into(), format!("{}", self.beta1));
        map.insert("beta2".into(), format!("{}", self.beta2));
        map.insert("epsilon".into(), format!("{}", self.epsilon));
        map.insert("amsgrad".into(), format!("{}", self.amsgrad));
        map.insert("epochs".into(), format!("{}", self.epochs));
        map.insert("batch-size".into(), format!("{}", self.batch_size));
        map.insert("hidden".into(), format!("{}", self.hidden));
        map.insert("embed-dim".into(), format!("{}", self.embed_dim));
        map.insert("layers".into(), format!("{}", self.layers));
        map.insert("bidirectional".into(), format!("{}", self.bidirectional));
        map.insert("max-sentence-len".into(), format!("{}", self.max_sentence_len));
        map.insert("clip-norm".into(), format!("{}", self.clip_norm));
        map.insert("seed".into(), format!("{}", self.seed));
        map.insert("max-decode-len".into(), format!("{}", self.max_decode_len));
        map.insert("bleu-smoothing".into(), format!("{}", self.bleu_smoothing));
        map
    }

    pub fn from_entries(entries: &BTreeMap<String, String>) -> Result<Self> {
        let mut config = TrainingConfig::default();
        config.apply_file(entries)?;
        Ok(config)
    }
}

/// Parses a key=value config file. `#` starts a comment; blank lines are
/// ignored; keys are kebab-case.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Encoding {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::format_at(format!("expected key=value, got {line:?}"), i + 1)
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_match_the_standard_settings() {
        let c = TrainingConfig::default();
        c.validate().unwrap();
        assert_eq!(c.learning_rate, 0.001);
        assert_eq!(c.beta1, 0.9);
        assert_eq!(c.beta2, 0.999);
        assert_eq!(c.epsilon, 1e-7);
        assert!(!c.amsgrad);
        assert_eq!(c.hidden, 128);
        assert_eq!(c.embed_dim, 150);
        assert_eq!(c.layers, 4);
        assert_eq!(c.max_sentence_len, 30);
        assert_eq!(c.clip_norm, 5.0);
        assert_eq!(c.max_decode_len, 50);
        assert!(c.bidirectional);
    }

    #[test]
    fn zero_epochs_is_rejected() {
        let mut c = TrainingConfig::default();
        c.epochs = 0;
        assert!(matches!(c.validate(), Err(Error::Contract(_))));
    }

    #[test]
    fn config_file_round_trips_through_entries() {
        let mut c = TrainingConfig::default();
        c.hidden = 64;
        c.amsgrad = true;
        c.bleu_smoothing = Smoothing::AddOneOnZero;
        let entries = c.entries();
        let parsed = TrainingConfig::from_entries(&entries).unwrap();
        assert_eq!(c, parsed);
    }

    #[test]
    fn parse_config_text_handles_comments_and_blanks() {
        let text = "# a comment\nepochs = 5\n\nhidden=32  # trailing comment\n";
        let map = parse_config_text(text).unwrap();
        assert_eq!(map.get("epochs").map(String::as_str), Some("5"));
        assert_eq!(map.get("hidden").map(String::as_str), Some("32"));
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn unknown_key_and_bad_value_are_config_errors() {
        let mut c = TrainingConfig::default();
        assert!(matches!(c.apply_key("no-such-key", "1"), Err(Error::Config(_))));
        assert!(matches!(c.apply_key("epochs", "many"), Err(Error::Config(_))));
    }

    #[test]
    fn malformed_line_is_a_format_error_with_line_number() {
        match parse_config_text("epochs=1\nnot a kv line\n") {
            Err(Error::Format { line, .. }) => assert_eq!(line, Some(2)),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
