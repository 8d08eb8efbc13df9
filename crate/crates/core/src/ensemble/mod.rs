//! The two learners: a bagged random-forest classifier and a histogram
//! gradient-boosted regressor, both built from [`crate::tree`] and both
//! persisted as versioned JSON documents.

mod forest;
mod gbdt;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::tree::{BinMap, LeafValue, Node, Tree};

pub use forest::{FOREST_KIND, train_forest, train_forest_matrix, ForestModel, ForestParams, ForestPrediction};
pub use gbdt::{GBDT_KIND, train_gbdt, train_gbdt_matrix, GbdtModel, GbdtParams, TrainingTrace};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("SingleClassTraining: training labels contain only class {0}")]
    SingleClassTraining(u8),
    #[error("EmptyBranch: the {branch} branch has {rows} training rows, at least 2 required")]
    EmptyBranch { branch: &'static str, rows: usize },
    #[error("TooFewRows: {0} training rows")]
    TooFewRows(usize),
    #[error("SchemaMismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Check that a feature matrix is rectangular, finite and non-empty.
fn check_matrix(values: &[f64], n_features: usize, n_rows: usize) -> Result<(), ModelError> {
    if n_features == 0 || values.len() != n_rows * n_features {
        return Err(ModelError::SchemaMismatch(format!(
            "{} values for {n_rows} rows of {n_features} features",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::SchemaMismatch("non-finite feature value".into()));
    }
    Ok(())
}

fn check_row(row: &[f64], n_features: usize) -> Result<(), ModelError> {
    if row.len() != n_features {
        return Err(ModelError::SchemaMismatch(format!(
            "row has {} values, model expects {n_features}",
            row.len()
        )));
    }
    Ok(())
}

pub fn check_fingerprint(model: &str, data: &str) -> Result<(), ModelError> {
    if model != data {
        return Err(ModelError::SchemaMismatch(format!(
            "data schema {data} does not match model schema {model}"
        )));
    }
    Ok(())
}

/// Shared load-time checks for bins and trees.
fn validate_trees(
    bins: &BinMap,
    trees: &[Tree],
    n_features: usize,
    scalar_leaves: bool,
) -> Result<(), ModelError> {
    if bins.n_features() != n_features {
        return Err(ModelError::InvalidModel(format!(
            "{} bin maps for {n_features} features",
            bins.n_features()
        )));
    }
    bins.validate().map_err(ModelError::InvalidModel)?;
    for (t, tree) in trees.iter().enumerate() {
        tree.validate(n_features)
            .map_err(|e| ModelError::InvalidModel(format!("tree {t}: {e}")))?;
        for node in &tree.nodes {
            match node {
                Node::Leaf { value: LeafValue::Scalar(_), .. } if !scalar_leaves => {
                    return Err(ModelError::InvalidModel(format!("tree {t} has a scalar leaf")))
                }
                Node::Leaf { value: LeafValue::Counts(c), .. } if scalar_leaves || c.len() != 2 => {
                    return Err(ModelError::InvalidModel(format!("tree {t} has a bad count leaf")))
                }
                Node::Split { feature, threshold_bin, .. }
                    if *threshold_bin as usize >= bins.n_bins(*feature) =>
                {
                    return Err(ModelError::InvalidModel(format!(
                        "tree {t} threshold {threshold_bin} out of range for feature {feature}"
                    )))
                }
                _ => {}
            }
        }
    }
    Ok(())
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String, ModelError> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, ModelError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
