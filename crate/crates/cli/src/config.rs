//! The run configuration: one JSON document covering every stage, with
//! command-line flags layered on top.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use duraflow_core::explain::DEFAULT_SAMPLE_CAP;
use duraflow_core::ingest::{FilterSpec, HeaderPolicy};
use duraflow_core::pipeline::PipelineConfig;
use duraflow_core::preprocess::PreprocessConfig;
use duraflow_core::report::HISTOGRAM_BINS;
use duraflow_core::synth::SynthSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Rows in each exported prediction series.
    pub first_n: usize,
    pub histogram_bins: usize,
    pub shap_sample_cap: usize,
    /// Rows sampled when explaining the forest; 0 skips it.
    pub classifier_shap_cap: usize,
    pub shap_seed: u64,
    /// Depth limit of the exported tree diagram.
    pub tree_dot_depth: Option<usize>,
    pub svg: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            first_n: 100,
            histogram_bins: HISTOGRAM_BINS,
            shap_sample_cap: DEFAULT_SAMPLE_CAP,
            classifier_shap_cap: 0,
            shap_seed: 42,
            tree_dot_depth: Some(4),
            svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Raw accident CSV read by `ingest` when `--input` is not given.
    pub raw_csv: Option<PathBuf>,
    pub header_policy: HeaderPolicy,
    pub filter: FilterSpec,
    pub preprocess: PreprocessConfig,
    pub pipeline: PipelineConfig,
    pub report: ReportConfig,
    pub synth: SynthSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }
}
