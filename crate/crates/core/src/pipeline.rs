//! The bi-level predictor: a forest routes each row to the short or long
//! branch, and that branch's booster prices it in minutes.
//!
//! Branch regressors are trained on rows split by their true label; at
//! inference the predicted label decides the branch. Outputs are never
//! blended.

use serde::{Deserialize, Serialize};

use crate::ensemble::{
    check_fingerprint, train_forest, train_gbdt, ForestModel, ForestParams, ForestPrediction, GbdtModel,
    GbdtParams, ModelError, MODEL_FORMAT_VERSION,
};
use crate::metrics::{classification_report, ClassificationReport, MetricsError, RegressionMetrics};
use crate::preprocess::{DatasetMeta, EncodedDataset};

pub const BILEVEL_KIND: &str = "bilevel_pipeline";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Long,
    Short,
}

impl Branch {
    pub fn from_label(label: u8) -> Self {
        if label == 1 {
            Branch::Short
        } else {
            Branch::Long
        }
    }

    pub fn label(self) -> u8 {
        u8::from(self == Branch::Short)
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Long => "long",
            Branch::Short => "short",
        }
    }
}

/// Anything that can assign regimes to a batch of rows. The forest is the
/// real implementation; stubs let tests fix the routing.
pub trait RegimeClassifier {
    fn classify(&self, values: &[f64], n_features: usize) -> Result<Vec<ForestPrediction>, ModelError>;
}

impl RegimeClassifier for ForestModel {
    fn classify(&self, values: &[f64], n_features: usize) -> Result<Vec<ForestPrediction>, ModelError> {
        if n_features != self.n_features {
            return Err(ModelError::SchemaMismatch(format!(
                "{n_features} features, classifier expects {}",
                self.n_features
            )));
        }
        self.predict_matrix(values)
    }
}

/// Routes every row to one label.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier(pub u8);

impl RegimeClassifier for ConstantClassifier {
    fn classify(&self, values: &[f64], n_features: usize) -> Result<Vec<ForestPrediction>, ModelError> {
        let mut proba = [0.0; 2];
        proba[usize::from(self.0.min(1))] = 1.0;
        Ok(vec![ForestPrediction::from_proba(proba); values.len() / n_features.max(1)])
    }
}

/// Replays a fixed label per row, e.g. the true labels for an oracle.
#[derive(Debug, Clone)]
pub struct FixedLabels(pub Vec<u8>);

impl RegimeClassifier for FixedLabels {
    fn classify(&self, values: &[f64], n_features: usize) -> Result<Vec<ForestPrediction>, ModelError> {
        let n = values.len() / n_features.max(1);
        if n != self.0.len() {
            return Err(ModelError::SchemaMismatch(format!("{n} rows for {} fixed labels", self.0.len())));
        }
        Ok(self
            .0
            .iter()
            .map(|&y| ForestPrediction::from_proba(if y == 1 { [0.0, 1.0] } else { [1.0, 0.0] }))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub forest: ForestParams,
    pub short_gbdt: GbdtParams,
    pub long_gbdt: GbdtParams,
    pub forest_seed: u64,
    pub short_seed: u64,
    pub long_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            short_gbdt: GbdtParams::default(),
            long_gbdt: GbdtParams::default(),
            forest_seed: 42,
            short_seed: 42,
            long_seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: PipelineConfig,
    /// Content hash of the training split.
    pub data_hash: String,
    pub n_train: usize,
    pub n_short: usize,
    pub n_long: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilevelModel {
    pub format_version: u32,
    pub model_kind: String,
    pub threshold: f64,
    pub schema_fingerprint: String,
    /// Schema, encoders and imputation statistics, so raw records can be
    /// encoded at prediction time.
    pub dataset_meta: DatasetMeta,
    pub provenance: Provenance,
    pub classifier: ForestModel,
    pub short_regressor: GbdtModel,
    pub long_regressor: GbdtModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilevelPrediction {
    pub minutes: f64,
    pub branch: Branch,
    /// `[p_long, p_short]` from the classifier.
    pub proba: [f64; 2],
}

pub fn train_bilevel(train: &EncodedDataset, config: &PipelineConfig) -> Result<BilevelModel, ModelError> {
    let short_idx: Vec<usize> = (0..train.n_rows()).filter(|&i| train.labels[i] == 1).collect();
    let long_idx: Vec<usize> = (0..train.n_rows()).filter(|&i| train.labels[i] == 0).collect();
    for (branch, rows) in [("short", short_idx.len()), ("long", long_idx.len())] {
        if rows < 2 {
            return Err(ModelError::EmptyBranch { branch, rows });
        }
    }
    let short_data = train.select(&short_idx);
    let long_data = train.select(&long_idx);

    let (classifier, (short, long)) = rayon::join(
        || train_forest(train, &config.forest, config.forest_seed),
        || {
            rayon::join(
                || train_gbdt(&short_data, &config.short_gbdt, config.short_seed),
                || train_gbdt(&long_data, &config.long_gbdt, config.long_seed),
            )
        },
    );
    let fingerprint = train.schema().fingerprint();
    Ok(BilevelModel {
        format_version: MODEL_FORMAT_VERSION,
        model_kind: BILEVEL_KIND.into(),
        threshold: train.meta.threshold,
        schema_fingerprint: fingerprint,
        dataset_meta: train.meta.clone(),
        provenance: Provenance {
            config: *config,
            data_hash: train.content_hash(),
            n_train: train.n_rows(),
            n_short: short_idx.len(),
            n_long: long_idx.len(),
        },
        classifier: classifier?,
        short_regressor: short?.0,
        long_regressor: long?.0,
    })
}

/// Route each row with `classifier` and price it with the chosen branch.
pub fn route<C: RegimeClassifier + ?Sized>(
    classifier: &C,
    short: &GbdtModel,
    long: &GbdtModel,
    values: &[f64],
    n_features: usize,
) -> Result<Vec<BilevelPrediction>, ModelError> {
    let classes = classifier.classify(values, n_features)?;
    if n_features == 0 || classes.len() * n_features != values.len() {
        return Err(ModelError::SchemaMismatch("classifier output does not match row count".into()));
    }
    classes
        .iter()
        .zip(values.chunks_exact(n_features))
        .map(|(c, row)| {
            let branch = Branch::from_label(c.label);
            let model = if branch == Branch::Short { short } else { long };
            Ok(BilevelPrediction {
                minutes: model.predict_row(row)?,
                branch,
                proba: c.proba,
            })
        })
        .collect()
}

impl BilevelModel {
    pub fn check_schema(&self, fingerprint: &str) -> Result<(), ModelError> {
        check_fingerprint(&self.schema_fingerprint, fingerprint)
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<BilevelPrediction, ModelError> {
        let mut out = self.predict_matrix(row)?;
        Ok(out.remove(0))
    }

    pub fn predict_matrix(&self, values: &[f64]) -> Result<Vec<BilevelPrediction>, ModelError> {
        let k = self.classifier.n_features;
        if !values.len().is_multiple_of(k) {
            return Err(ModelError::SchemaMismatch("ragged feature matrix".into()));
        }
        route(&self.classifier, &self.short_regressor, &self.long_regressor, values, k)
    }

    pub fn predict(&self, data: &EncodedDataset) -> Result<Vec<BilevelPrediction>, ModelError> {
        self.check_schema(&data.schema().fingerprint())?;
        self.predict_matrix(&data.values)
    }

    pub fn evaluate(&self, data: &EncodedDataset) -> Result<Evaluation, ModelError> {
        self.check_schema(&data.schema().fingerprint())?;
        evaluate_with(&self.classifier, &self.short_regressor, &self.long_regressor, data)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.model_kind != BILEVEL_KIND {
            return Err(ModelError::InvalidModel(format!("model_kind {} is not {BILEVEL_KIND}", self.model_kind)));
        }
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::InvalidModel(format!("unsupported format_version {}", self.format_version)));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(ModelError::InvalidModel("threshold must be positive".into()));
        }
        self.classifier.validate()?;
        self.short_regressor.validate()?;
        self.long_regressor.validate()?;
        let fp = &self.schema_fingerprint;
        for (name, other) in [
            ("classifier", &self.classifier.schema_fingerprint),
            ("short regressor", &self.short_regressor.schema_fingerprint),
            ("long regressor", &self.long_regressor.schema_fingerprint),
        ] {
            if other != fp {
                return Err(ModelError::InvalidModel(format!("{name} schema differs from the bundle")));
            }
        }
        if self.dataset_meta.schema.fingerprint() != *fp {
            return Err(ModelError::InvalidModel("embedded schema differs from the bundle".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchMetrics {
    /// This branch's regressor on test rows whose true label is the branch.
    pub true_label: Option<RegressionMetrics>,
    /// Pipeline output on rows routed to the branch.
    pub routed: Option<RegressionMetrics>,
    /// Pipeline output on rows routed to the branch that truly belong there.
    pub correctly_routed: Option<RegressionMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_rows: usize,
    pub threshold: f64,
    pub combined: RegressionMetrics,
    pub classification: ClassificationReport,
    pub misroute_rate: f64,
    pub short: BranchMetrics,
    pub long: BranchMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub predictions: Vec<BilevelPrediction>,
}

fn metrics_on(actual: &[f64], predicted: &[f64], rows: &[usize]) -> Option<RegressionMetrics> {
    let a: Vec<f64> = rows.iter().map(|&i| actual[i]).collect();
    let p: Vec<f64> = rows.iter().map(|&i| predicted[i]).collect();
    RegressionMetrics::compute(&a, &p).ok()
}

fn metric_err(e: MetricsError) -> ModelError {
    ModelError::InvalidParams(e.to_string())
}

pub fn evaluate_with<C: RegimeClassifier + ?Sized>(
    classifier: &C,
    short: &GbdtModel,
    long: &GbdtModel,
    data: &EncodedDataset,
) -> Result<Evaluation, ModelError> {
    if data.n_rows() == 0 {
        return Err(ModelError::TooFewRows(0));
    }
    let k = data.n_features();
    let predictions = route(classifier, short, long, &data.values, k)?;
    let minutes: Vec<f64> = predictions.iter().map(|p| p.minutes).collect();
    let routed: Vec<u8> = predictions.iter().map(|p| p.branch.label()).collect();
    let actual = &data.durations;

    let combined = RegressionMetrics::compute(actual, &minutes).map_err(metric_err)?;
    let classification = classification_report(&data.labels, &routed).map_err(metric_err)?;

    let branch = |b: Branch, model: &GbdtModel| -> Result<BranchMetrics, ModelError> {
        let label = b.label();
        let truly: Vec<usize> = (0..data.n_rows()).filter(|&i| data.labels[i] == label).collect();
        let sent: Vec<usize> = (0..data.n_rows()).filter(|&i| routed[i] == label).collect();
        let correct: Vec<usize> = sent.iter().copied().filter(|&i| data.labels[i] == label).collect();
        let mut own = vec![0.0; data.n_rows()];
        for &i in &truly {
            own[i] = model.predict_row(data.row(i))?;
        }
        Ok(BranchMetrics {
            true_label: metrics_on(actual, &own, &truly),
            routed: metrics_on(actual, &minutes, &sent),
            correctly_routed: metrics_on(actual, &minutes, &correct),
        })
    };

    let misroute = routed.iter().zip(&data.labels).filter(|(p, t)| p != t).count();
    let report = EvaluationReport {
        n_rows: data.n_rows(),
        threshold: data.meta.threshold,
        combined,
        misroute_rate: misroute as f64 / data.n_rows() as f64,
        classification,
        short: branch(Branch::Short, short)?,
        long: branch(Branch::Long, long)?,
    };
    Ok(Evaluation { report, predictions })
}
