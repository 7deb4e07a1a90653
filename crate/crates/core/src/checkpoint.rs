//! Bit-exact training checkpoints.
//!
//! Layout: the 8-byte magic `ZSTCKPT1`, a little-endian u64 byte length,
//! a UTF-8 key=value metadata block (version, epoch, resolved config,
//! vocabulary hash, optimizer step, RNG state and the tensor manifest with
//! shapes and byte offsets), then the tensor payloads as little-endian f64
//! in manifest order. Text metadata keeps the file inspectable; the raw f64
//! payload keeps round trips bit-exact.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use crate::config::TrainingConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::optim::AdamState;
use crate::rng::RngSnapshot;
use crate::tensor::Tensor;
use crate::vocab::Vocabulary;

const MAGIC: &[u8; 8] = b"ZSTCKPT1";
const VERSION: u32 = 1;

/// Everything needed to resume or serve a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainingConfig,
    pub vocab_hash: u64,
    /// Epochs completed when the checkpoint was written.
    pub epoch: usize,
    pub params: ModelParams,
    pub adam: AdamState,
    pub rng: RngSnapshot,
}

impl Checkpoint {
    /// Rejects use against a vocabulary other than the one trained on.
    pub fn verify_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if self.vocab_hash != vocab.content_hash() {
            return Err(Error::compatibility(format!(
                "checkpoint was built against vocabulary hash {:016x}, got {:016x}",
                self.vocab_hash,
                vocab.content_hash()
            )));
        }
        Ok(())
    }
}

fn ordered_tensors(ckpt: &Checkpoint) -> Vec<(String, Vec<f64>, Vec<usize>)> {
    let named = ckpt.params.named();
    let mut out: Vec<(String, Vec<f64>, Vec<usize>)> = Vec::new();
    for (name, t) in &named {
        out.push((name.clone(), t.data().to_vec(), t.shape().to_vec()));
    }
    for (i, (name, t)) in named.iter().enumerate() {
        out.push((format!("adam.m.{name}"), ckpt.adam.m[i].clone(), t.shape().to_vec()));
    }
    for (i, (name, t)) in named.iter().enumerate() {
        out.push((format!("adam.v.{name}"), ckpt.adam.v[i].clone(), t.shape().to_vec()));
    }
    if let Some(vhat) = &ckpt.adam.vhat {
        for (i, (name, t)) in named.iter().enumerate() {
            out.push((format!("adam.vhat.{name}"), vhat[i].clone(), t.shape().to_vec()));
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let tensors = ordered_tensors(ckpt);

    let mut meta = String::new();
    meta.push_str(&format!("version={VERSION}\n"));
    meta.push_str(&format!("epoch={}\n", ckpt.epoch));
    meta.push_str(&format!("vocab-hash={:016x}\n", ckpt.vocab_hash));
    meta.push_str(&format!("vocab-size={}\n", ckpt.params.config.vocab_size));
    for (key, value) in ckpt.config.entries() {
        meta.push_str(&format!("config.{key}={value}\n"));
    }
    meta.push_str(&format!("adam-step={}\n", ckpt.adam.step_count));
    meta.push_str(&format!("rng-seed={}\n", hex_encode(&ckpt.rng.seed)));
    meta.push_str(&format!("rng-word-pos={}\n", ckpt.rng.word_pos));
    meta.push_str(&format!("rng-stream={}\n", ckpt.rng.stream));
    meta.push_str(&format!("tensor-count={}\n", tensors.len()));
    let mut offset = 0usize;
    for (i, (name, data, shape)) in tensors.iter().enumerate() {
        let shape_text: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        meta.push_str(&format!("tensor.{i}.name={name}\n"));
        meta.push_str(&format!("tensor.{i}.shape={}\n", shape_text.join(",")));
        meta.push_str(&format!("tensor.{i}.offset={offset}\n"));
        offset += data.len() * 8;
    }

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(meta.len() as u64).to_le_bytes())?;
    out.write_all(meta.as_bytes())?;
    for (_, data, _) in &tensors {
        for v in data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut file = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let truncated = || Error::format(format!("checkpoint {path:?} is truncated"));

    if bytes.len() < 16 {
        return Err(truncated());
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::format(format!("{path:?} is not a checkpoint (bad magic)")));
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    if bytes.len() < 16 + meta_len {
        return Err(truncated());
    }
    let meta_text = std::str::from_utf8(&bytes[16..16 + meta_len])
        .map_err(|_| Error::format(format!("checkpoint {path:?} metadata is not UTF-8")))?;

    let mut meta: BTreeMap<String, String> = BTreeMap::new();
    for line in meta_text.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(format!("bad metadata line {line:?} in {path:?}")))?;
        meta.insert(k.to_string(), v.to_string());
    }
    let get = |key: &str| -> Result<&String> {
        meta.get(key)
            .ok_or_else(|| Error::format(format!("checkpoint is missing metadata key {key:?}")))
    };
    let parse_num = |key: &str| -> Result<u64> {
        get(key)?
            .parse()
            .map_err(|_| Error::format(format!("metadata key {key:?} is not a number")))
    };

    let version: u64 = parse_num("version")?;
    if version != u64::from(VERSION) {
        return Err(Error::compatibility(format!(
            "checkpoint version {version} is not supported (expected {VERSION})"
        )));
    }
    let epoch = parse_num("epoch")? as usize;
    let vocab_hash = u64::from_str_radix(get("vocab-hash")?, 16)
        .map_err(|_| Error::format("vocab-hash is not hex".to_string()))?;
    let vocab_size = parse_num("vocab-size")? as usize;

    let mut config_entries = BTreeMap::new();
    for (k, v) in &meta {
        if let Some(key) = k.strip_prefix("config.") {
            config_entries.insert(key.to_string(), v.clone());
        }
    }
    let config = TrainingConfig::from_entries(&config_entries)?;

    // Tensor payloads.
    let count = parse_num("tensor-count")? as usize;
    let payload = &bytes[16 + meta_len..];
    let mut tensors: HashMap<String, Tensor> = HashMap::new();
    let mut order: Vec<String> = Vec::with_capacity(count);
    for i in 0..count {
        let name = get(&format!("tensor.{i}.name"))?.clone();
        let shape: Vec<usize> = get(&format!("tensor.{i}.shape"))?
            .split(',')
            .map(|d| {
                d.parse::<usize>()
                    .map_err(|_| Error::format(format!("bad shape for tensor {name}")))
            })
            .collect::<Result<_>>()?;
        let offset = parse_num(&format!("tensor.{i}.offset"))? as usize;
        let numel: usize = shape.iter().product();
        let end = offset + numel * 8;
        if end > payload.len() {
            return Err(truncated());
        }
        let data: Vec<f64> = payload[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.insert(name.clone(), Tensor::from_vec(shape, data)?);
        order.push(name);
    }

    // Split out the optimizer tensors, keeping parameter order.
    let param_names: Vec<String> =
        order.iter().filter(|n| !n.starts_with("adam.")).cloned().collect();
    let mut adam_m = Vec::with_capacity(param_names.len());
    let mut adam_v = Vec::with_capacity(param_names.len());
    let mut adam_vhat = Vec::new();
    for name in &param_names {
        adam_m.push(
            tensors
                .remove(&format!("adam.m.{name}"))
                .ok_or_else(|| Error::format(format!("missing adam.m.{name}")))?
                .data()
                .to_vec(),
        );
        adam_v.push(
            tensors
                .remove(&format!("adam.v.{name}"))
                .ok_or_else(|| Error::format(format!("missing adam.v.{name}")))?
                .data()
                .to_vec(),
        );
        if config.amsgrad {
            adam_vhat.push(
                tensors
                    .remove(&format!("adam.vhat.{name}"))
                    .ok_or_else(|| Error::format(format!("missing adam.vhat.{name}")))?
                    .data()
                    .to_vec(),
            );
        }
    }

    let params =
        ModelParams::from_named(config.model_config(vocab_size), vocab_hash, &mut tensors)?;

    let adam = AdamState {
        learning_rate: config.learning_rate,
        beta1: config.beta1,
        beta2: config.beta2,
        epsilon: config.epsilon,
        amsgrad: config.amsgrad,
        step_count: parse_num("adam-step")?,
        m: adam_m,
        v: adam_v,
        vhat: config.amsgrad.then_some(adam_vhat),
    };

    let seed_hex = get("rng-seed")?;
    let rng = RngSnapshot {
        seed: hex_decode(seed_hex)?,
        word_pos: get("rng-word-pos")?
            .parse()
            .map_err(|_| Error::format("rng-word-pos is not a number".to_string()))?,
        stream: parse_num("rng-stream")?,
    };

    Ok(Checkpoint { config, vocab_hash, epoch, params, adam, rng })
}

/// Loads and immediately verifies the checkpoint belongs to `vocab`.
pub fn load_checkpoint_for_vocab(path: &Path, vocab: &Vocabulary) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    ckpt.verify_vocab(vocab)?;
    Ok(ckpt)
}

fn hex_encode(bytes: &[u8; 32]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hex_decode(text: &str) -> Result<[u8; 32]> {
    if text.len() != 64 || !text.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(Error::format("rng-seed must be 64 hex characters".to_string()));
    }
    let mut out = [0u8; 32];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = u8::from_str_radix(&text[2 * i..2 * i + 2], 16).expect("validated hex");
    }
    Ok(out)
}
