//! Shared plumbing: the working directory, the effective configuration and
//! artifact reading and writing.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use duraflow_core::ingest::HeaderPolicy;
use duraflow_core::pipeline::BilevelModel;
use duraflow_core::preprocess::EncodedDataset;
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::FilterArgs;

/// A mistake in how the tool was invoked rather than in the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub struct Workspace {
    pub root: PathBuf,
    pub config: RunConfig,
}

impl Workspace {
    pub fn open(root: PathBuf, config: Option<&Path>) -> Result<Self> {
        let config = match config {
            Some(p) => RunConfig::load(p).map_err(|e| UsageError(format!("{e:#}")))?,
            None => RunConfig::default(),
        };
        fs::create_dir_all(&root).with_context(|| format!("creating workdir {}", root.display()))?;
        Ok(Self { root, config })
    }

    /// `explicit` if given, otherwise `default` inside the workdir.
    pub fn input(&self, explicit: Option<PathBuf>, default: &str) -> PathBuf {
        explicit.unwrap_or_else(|| self.root.join(default))
    }

    /// Path of an output inside the workdir, with its directory created.
    pub fn output(&self, rel: &Path) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(path)
    }

    pub fn manifest(&self, subcommand: &'static str) -> Manifest {
        Manifest::new(subcommand, &self.config)
    }

    pub fn finish(&self, manifest: &Manifest) -> Result<()> {
        let path = manifest.write(&self.root)?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T, manifest: &mut Manifest) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(rel, &text, manifest)
    }

    pub fn write_text(&self, rel: &str, text: &str, manifest: &mut Manifest) -> Result<()> {
        let path = self.output(Path::new(rel))?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        manifest.output(rel);
        Ok(())
    }

    /// Stream into `rel` through `fill`.
    pub fn write_with<F>(&self, rel: &str, manifest: &mut Manifest, fill: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.output(Path::new(rel))?;
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        fill(&mut w)?;
        w.flush()?;
        manifest.output(rel);
        Ok(())
    }

    pub fn load_bundle(&self, explicit: Option<PathBuf>, manifest: &mut Manifest) -> Result<BilevelModel> {
        let path = self.input(explicit, "model/bundle.json");
        let text = fs::read_to_string(&path).with_context(|| format!("reading model {}", path.display()))?;
        let model = BilevelModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))?;
        manifest.input(&path, &self.root)?;
        Ok(model)
    }

    pub fn load_dataset(&self, path: &Path, manifest: &mut Manifest) -> Result<EncodedDataset> {
        let ds = EncodedDataset::load(path).with_context(|| format!("loading dataset {}", path.display()))?;
        manifest.input(path, &self.root)?;
        manifest.input(&duraflow_core::preprocess::sidecar_path(path), &self.root)?;
        Ok(ds)
    }
}

impl FilterArgs {
    pub fn apply(&self, config: &mut RunConfig) {
        if self.lenient {
            config.header_policy = HeaderPolicy::Lenient;
        }
        let f = &mut config.filter;
        if let Some(s) = &self.state {
            f.state_code = s.clone();
        }
        if self.any_source {
            f.source_tag = None;
        } else if let Some(s) = &self.source {
            f.source_tag = Some(s.clone());
        }
        if let Some(t) = self.date_min {
            f.date_min = t;
        }
        if let Some(t) = self.date_max {
            f.date_max = t;
        }
    }
}
