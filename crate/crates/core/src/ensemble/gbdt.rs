use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_fingerprint, check_matrix, check_row, validate_trees, ModelError, MODEL_FORMAT_VERSION};
use crate::preprocess::EncodedDataset;
use crate::tree::{grow_tree, BinMap, BinStats, GrowParams, Growth, Objective, Tree, DEFAULT_MAX_BINS};

pub const GBDT_KIND: &str = "gbdt_regressor";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub lambda_l2: f64,
    pub min_gain: f64,
    pub max_bins: usize,
    /// Stop after this many rounds without validation improvement;
    /// `None` trains every round on the full training set.
    pub early_stopping_rounds: Option<usize>,
    /// Share of the training rows held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_rounds: 500,
            learning_rate: 0.05,
            max_leaves: 31,
            max_depth: None,
            min_samples_leaf: 20,
            lambda_l2: 1.0,
            min_gain: 1e-7,
            max_bins: DEFAULT_MAX_BINS,
            early_stopping_rounds: Some(50),
            validation_fraction: 0.1,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParams(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.max_leaves < 2 {
            return bad("max_leaves must be >= 2");
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be >= 1");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be >= 1");
        }
        if !self.lambda_l2.is_finite() || self.lambda_l2 < 0.0 {
            return bad("lambda_l2 must be >= 0");
        }
        if self.min_gain.is_nan() || self.min_gain < 0.0 {
            return bad("min_gain must be >= 0");
        }
        if !(2..=256).contains(&self.max_bins) {
            return bad("max_bins must be in 2..=256");
        }
        if self.early_stopping_rounds == Some(0) {
            return bad("early_stopping_rounds must be >= 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must be in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub model_kind: String,
    pub params: GbdtParams,
    pub seed: u64,
    pub schema_fingerprint: String,
    pub n_features: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub bins: BinMap,
    pub trees: Vec<Tree>,
}

/// Per-round diagnostics from training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Training MSE on the fitting rows, before round 1 and after each round.
    pub train_mse: Vec<f64>,
    /// Held-out RMSE after each round, when early stopping is active.
    pub valid_rmse: Vec<f64>,
    pub n_fit_rows: usize,
    pub n_valid_rows: usize,
    /// Rounds kept in the final model.
    pub rounds_kept: usize,
    /// Training stopped because a round could no longer lower the loss.
    pub converged_early: bool,
}

pub fn train_gbdt(
    train: &EncodedDataset,
    params: &GbdtParams,
    seed: u64,
) -> Result<(GbdtModel, TrainingTrace), ModelError> {
    train_gbdt_matrix(
        &train.values,
        train.n_features(),
        &train.durations,
        params,
        seed,
        &train.schema().fingerprint(),
    )
}

fn mse(pred: &[f64], y: &[f64], rows: &[u32]) -> f64 {
    let s: f64 = rows
        .iter()
        .map(|&i| {
            let e = pred[i as usize] - y[i as usize];
            e * e
        })
        .sum();
    s / rows.len() as f64
}

/// Squared-loss boosting on a row-major matrix. `seed` only drives the
/// early-stopping carve-out.
pub fn train_gbdt_matrix(
    values: &[f64],
    n_features: usize,
    targets: &[f64],
    params: &GbdtParams,
    seed: u64,
    schema_fingerprint: &str,
) -> Result<(GbdtModel, TrainingTrace), ModelError> {
    params.validate()?;
    let n = targets.len();
    if n < 2 {
        return Err(ModelError::TooFewRows(n));
    }
    check_matrix(values, n_features, n)?;
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(ModelError::InvalidParams("non-finite target".into()));
    }

    let (fit, valid) = carve_out(n, params, seed);
    let base_score = fit.iter().map(|&i| targets[i as usize]).sum::<f64>() / fit.len() as f64;
    let bins = BinMap::fit(values, n_features, params.max_bins);
    let data = bins.bin_matrix(values);
    let grow = GrowParams {
        objective: Objective::SquaredLoss { lambda_l2: params.lambda_l2 },
        growth: Growth::LeafWise,
        max_depth: params.max_depth,
        max_leaves: Some(params.max_leaves),
        min_samples_leaf: params.min_samples_leaf,
        min_gain: params.min_gain,
        features_per_split: None,
    };

    let lr = params.learning_rate;
    let mut pred = vec![base_score; n];
    let mut stats = vec![BinStats::default(); n];
    let mut trees: Vec<Tree> = Vec::new();
    let mut trace = TrainingTrace {
        train_mse: vec![mse(&pred, targets, &fit)],
        n_fit_rows: fit.len(),
        n_valid_rows: valid.len(),
        ..TrainingTrace::default()
    };
    let mut best = (f64::INFINITY, 0usize);

    for round in 0..params.n_rounds {
        for &i in &fit {
            let i = i as usize;
            stats[i] = BinStats::gradient(pred[i] - targets[i], 1.0);
        }
        let tree = grow_tree(&data, &fit, &stats, &grow, None::<&mut ChaCha8Rng>);
        let next: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| pred[i] + lr * tree.scalar_at(tree.leaf_index_at(&data, i)))
            .collect();
        // Exact arithmetic never raises the loss; a rise is rounding noise at
        // a plateau, so the round is dropped and boosting has converged.
        let next_mse = mse(&next, targets, &fit);
        if next_mse > *trace.train_mse.last().unwrap() {
            trace.converged_early = true;
            break;
        }
        pred = next;
        trees.push(tree);
        trace.train_mse.push(next_mse);

        if let Some(patience) = params.early_stopping_rounds.filter(|_| !valid.is_empty()) {
            let rmse = mse(&pred, targets, &valid).sqrt();
            trace.valid_rmse.push(rmse);
            if rmse < best.0 {
                best = (rmse, round + 1);
            } else if round + 1 - best.1 >= patience {
                break;
            }
        }
    }
    if !valid.is_empty() && params.early_stopping_rounds.is_some() {
        trees.truncate(best.1);
    }
    trace.rounds_kept = trees.len();

    let model = GbdtModel {
        format_version: MODEL_FORMAT_VERSION,
        model_kind: GBDT_KIND.into(),
        params: *params,
        seed,
        schema_fingerprint: schema_fingerprint.into(),
        n_features,
        base_score,
        learning_rate: lr,
        bins,
        trees,
    };
    Ok((model, trace))
}

/// Fit and validation row indices, each ascending. Validation is empty
/// when early stopping is off or the set is too small to spare rows.
fn carve_out(n: usize, params: &GbdtParams, seed: u64) -> (Vec<u32>, Vec<u32>) {
    let all: Vec<u32> = (0..n as u32).collect();
    if params.early_stopping_rounds.is_none() {
        return (all, Vec::new());
    }
    let n_valid = (params.validation_fraction * n as f64).round() as usize;
    if n_valid == 0 || n - n_valid < 2 {
        return (all, Vec::new());
    }
    let mut order = all;
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut valid = order[..n_valid].to_vec();
    let mut fit = order[n_valid..].to_vec();
    valid.sort_unstable();
    fit.sort_unstable();
    (fit, valid)
}

impl GbdtModel {
    pub fn check_schema(&self, fingerprint: &str) -> Result<(), ModelError> {
        check_fingerprint(&self.schema_fingerprint, fingerprint)
    }

    /// `base_score + learning_rate · Σ tree outputs`, without clipping.
    pub fn predict_raw(&self, row: &[f64]) -> Result<f64, ModelError> {
        check_row(row, self.n_features)?;
        let bins: Vec<u8> = (0..self.n_features).map(|f| self.bins.bin(f, row[f])).collect();
        let sum: f64 = self
            .trees
            .iter()
            .map(|t| t.scalar_at(t.leaf_index_binned(&bins)))
            .sum();
        Ok(self.base_score + self.learning_rate * sum)
    }

    /// Predicted minutes, clipped below at 0.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64, ModelError> {
        Ok(self.predict_raw(row)?.max(0.0))
    }

    pub fn predict_matrix(&self, values: &[f64]) -> Result<Vec<f64>, ModelError> {
        if !values.len().is_multiple_of(self.n_features) {
            return Err(ModelError::SchemaMismatch("ragged feature matrix".into()));
        }
        values
            .par_chunks(self.n_features)
            .map(|row| self.predict_row(row))
            .collect()
    }

    pub fn predict(&self, data: &EncodedDataset) -> Result<Vec<f64>, ModelError> {
        self.check_schema(&data.schema().fingerprint())?;
        self.predict_matrix(&data.values)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.model_kind != GBDT_KIND {
            return Err(ModelError::InvalidModel(format!("model_kind {} is not {GBDT_KIND}", self.model_kind)));
        }
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::InvalidModel(format!("unsupported format_version {}", self.format_version)));
        }
        if !self.base_score.is_finite() || !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(ModelError::InvalidModel("bad base_score or learning_rate".into()));
        }
        validate_trees(&self.bins, &self.trees, self.n_features, true)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}
