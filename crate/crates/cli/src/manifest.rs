//! Run manifests: every command records what it ran with, next to its
//! outputs, so any artifact can be reproduced from its manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use zst_core::config::TrainingConfig;
use zst_core::Result;

pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_file: Option<&'a Path>,
    pub config: Option<&'a TrainingConfig>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
}

pub fn write_manifest(out_dir: &Path, manifest: &Manifest<'_>) -> Result<()> {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = String::new();
    text.push_str(&format!("command={}\n", manifest.command));
    text.push_str(&format!("tool-version={}\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("timestamp-unix={timestamp}\n"));
    match manifest.config_file {
        Some(path) => text.push_str(&format!("config-file={}\n", path.display())),
        None => text.push_str("config-file=\n"),
    }
    if let Some(seed) = manifest.seed {
        text.push_str(&format!("seed={seed}\n"));
    }
    for (i, input) in manifest.inputs.iter().enumerate() {
        text.push_str(&format!("input.{i}={}\n", input.display()));
    }
    for (i, output) in manifest.outputs.iter().enumerate() {
        text.push_str(&format!("output.{i}={output}\n"));
    }
    if let Some(config) = manifest.config {
        for (key, value) in config.entries() {
            text.push_str(&format!("config.{key}={value}\n"));
        }
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(out_dir.join("manifest.txt"))?);
    file.write_all(text.as_bytes())?;
    file.flush()?;
    Ok(())
}
