use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_fingerprint, check_matrix, check_row, validate_trees, ModelError, MODEL_FORMAT_VERSION};
use crate::preprocess::EncodedDataset;
use crate::tree::{grow_tree, BinMap, BinStats, BinnedMatrix, GrowParams, Growth, LeafValue, Node, Objective, Tree, DEFAULT_MAX_BINS};

pub const FOREST_KIND: &str = "random_forest_classifier";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features sampled per split; `None` means ⌊√k⌋.
    pub mtry: Option<usize>,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_gain: f64,
    pub bootstrap: bool,
    pub max_bins: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            max_depth: 16,
            min_samples_leaf: 5,
            min_gain: 1e-7,
            bootstrap: true,
            max_bins: DEFAULT_MAX_BINS,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParams(m.into()));
        if self.n_trees == 0 {
            return bad("n_trees must be >= 1");
        }
        if self.mtry == Some(0) {
            return bad("mtry must be >= 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be >= 1");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be >= 1");
        }
        if self.min_gain.is_nan() || self.min_gain < 0.0 {
            return bad("min_gain must be >= 0");
        }
        if !(2..=256).contains(&self.max_bins) {
            return bad("max_bins must be in 2..=256");
        }
        Ok(())
    }

    pub fn effective_mtry(&self, n_features: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| ((n_features as f64).sqrt().floor() as usize).max(1))
            .min(n_features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub model_kind: String,
    pub params: ForestParams,
    pub seed: u64,
    pub schema_fingerprint: String,
    pub n_features: usize,
    pub bins: BinMap,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestPrediction {
    /// 1 = short, 0 = long.
    pub label: u8,
    /// `[p_long, p_short]`.
    pub proba: [f64; 2],
}

impl ForestPrediction {
    /// Argmax of `proba`; an exact tie goes to the long class.
    pub fn from_proba(proba: [f64; 2]) -> Self {
        Self {
            label: u8::from(proba[1] > proba[0]),
            proba,
        }
    }
}

pub fn train_forest(
    train: &EncodedDataset,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, ModelError> {
    train_forest_matrix(
        &train.values,
        train.n_features(),
        &train.labels,
        params,
        seed,
        &train.schema().fingerprint(),
    )
}

/// Train on a row-major matrix. Tree `t` draws its bootstrap and its split
/// features from ChaCha8 stream `t` of `seed`, so the model depends only on
/// (data, params, seed) and not on thread scheduling.
pub fn train_forest_matrix(
    values: &[f64],
    n_features: usize,
    labels: &[u8],
    params: &ForestParams,
    seed: u64,
    schema_fingerprint: &str,
) -> Result<ForestModel, ModelError> {
    params.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(ModelError::TooFewRows(0));
    }
    check_matrix(values, n_features, n)?;
    if labels.iter().any(|&y| y > 1) {
        return Err(ModelError::InvalidParams("labels must be 0 or 1".into()));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(ModelError::SingleClassTraining(labels[0]));
    }

    let bins = BinMap::fit(values, n_features, params.max_bins);
    let data = bins.bin_matrix(values);
    let grow = GrowParams {
        objective: Objective::Gini,
        growth: Growth::DepthWise,
        max_depth: Some(params.max_depth),
        max_leaves: None,
        min_samples_leaf: params.min_samples_leaf,
        min_gain: params.min_gain,
        features_per_split: Some(params.effective_mtry(n_features)),
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| grow_one(&data, labels, &grow, params.bootstrap, seed, t as u64))
        .collect();
    Ok(ForestModel {
        format_version: MODEL_FORMAT_VERSION,
        model_kind: FOREST_KIND.into(),
        params: *params,
        seed,
        schema_fingerprint: schema_fingerprint.into(),
        n_features,
        bins,
        trees,
    })
}

fn grow_one(
    data: &BinnedMatrix,
    labels: &[u8],
    grow: &GrowParams,
    bootstrap: bool,
    seed: u64,
    stream: u64,
) -> Tree {
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut weights = vec![0u32; n];
    if bootstrap {
        for _ in 0..n {
            weights[rng.random_range(0..n)] += 1;
        }
    } else {
        weights.fill(1);
    }
    let samples: Vec<u32> = (0..n as u32).filter(|&i| weights[i as usize] > 0).collect();
    let stats: Vec<BinStats> = labels
        .iter()
        .zip(&weights)
        .map(|(&y, &w)| BinStats::class(y, f64::from(w)))
        .collect();
    grow_tree(data, &samples, &stats, grow, Some(&mut rng))
}

/// Class-probability vector of one leaf, normalised by its cover.
fn leaf_proba(tree: &Tree, leaf: usize) -> [f64; 2] {
    match &tree.nodes[leaf] {
        Node::Leaf { value: LeafValue::Counts(c), cover } if *cover > 0.0 => [c[0] / cover, c[1] / cover],
        _ => [0.5, 0.5],
    }
}

impl ForestModel {
    pub fn check_schema(&self, fingerprint: &str) -> Result<(), ModelError> {
        check_fingerprint(&self.schema_fingerprint, fingerprint)
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<ForestPrediction, ModelError> {
        check_row(row, self.n_features)?;
        let bins: Vec<u8> = (0..self.n_features).map(|f| self.bins.bin(f, row[f])).collect();
        Ok(self.predict_bins(&bins))
    }

    fn predict_bins(&self, bins: &[u8]) -> ForestPrediction {
        let mut p = [0.0; 2];
        for tree in &self.trees {
            let q = leaf_proba(tree, tree.leaf_index_binned(bins));
            p[0] += q[0];
            p[1] += q[1];
        }
        let k = self.trees.len() as f64;
        ForestPrediction::from_proba([p[0] / k, p[1] / k])
    }

    /// Predictions for every row of a row-major matrix, in order.
    pub fn predict_matrix(&self, values: &[f64]) -> Result<Vec<ForestPrediction>, ModelError> {
        if !values.len().is_multiple_of(self.n_features) {
            return Err(ModelError::SchemaMismatch("ragged feature matrix".into()));
        }
        values
            .par_chunks(self.n_features)
            .map(|row| self.predict_row(row))
            .collect()
    }

    pub fn predict(&self, data: &EncodedDataset) -> Result<Vec<ForestPrediction>, ModelError> {
        self.check_schema(&data.schema().fingerprint())?;
        self.predict_matrix(&data.values)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.model_kind != FOREST_KIND {
            return Err(ModelError::InvalidModel(format!("model_kind {} is not {FOREST_KIND}", self.model_kind)));
        }
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::InvalidModel(format!("unsupported format_version {}", self.format_version)));
        }
        if self.trees.is_empty() {
            return Err(ModelError::InvalidModel("forest has no trees".into()));
        }
        validate_trees(&self.bins, &self.trees, self.n_features, false)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}
