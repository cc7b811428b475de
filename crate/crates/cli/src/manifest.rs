//! Per-command run manifest: settings, config hash, seed, version and
//! content hashes of inputs and outputs. No timestamps, so reruns match.

use crate::config::Config;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

pub struct Manifest {
    command: String,
    inputs: Vec<(String, PathBuf)>,
    outputs: Vec<PathBuf>,
}

pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest { command: command.to_string(), inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.push((name.to_string(), path.to_path_buf()));
    }

    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn write(&self, dir: &Path, config: &Config) -> anyhow::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("manifest.txt"))?);
        writeln!(out, "# dfa-manifest v1")?;
        writeln!(out, "command={}", self.command)?;
        writeln!(out, "version={}", env!("CARGO_PKG_VERSION"))?;
        writeln!(out, "seed={}", config.seed()?)?;
        writeln!(out, "config_hash={}", config.hash())?;
        for (k, v) in config.effective() {
            writeln!(out, "config.{k}={v}")?;
        }
        for (name, path) in &self.inputs {
            writeln!(out, "input.{name}={}", file_sha256(path)?)?;
        }
        for path in &self.outputs {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            writeln!(out, "output.{name}={}", file_sha256(path)?)?;
        }
        out.flush()?;
        Ok(())
    }
}
