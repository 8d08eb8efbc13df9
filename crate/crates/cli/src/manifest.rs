//! Per-run provenance record written beside a subcommand's outputs.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

/// No timestamps or absolute paths, so identical runs give identical bytes.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config: RunConfig,
    pub inputs: Vec<InputHash>,
    /// Output paths relative to the working directory.
    pub outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl Manifest {
    pub fn new(subcommand: &'static str, config: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Record an input, named relative to `workdir` when it lives inside it.
    pub fn input(&mut self, path: &Path, workdir: &Path) -> Result<()> {
        self.inputs.push(InputHash {
            path: display(path.strip_prefix(workdir).unwrap_or(path)),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn output(&mut self, rel: impl Into<PathBuf>) {
        self.outputs.push(display(&rel.into()));
    }

    pub fn write(&self, workdir: &Path) -> Result<PathBuf> {
        let path = workdir.join(format!("{}.manifest.json", self.subcommand));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn display(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}
