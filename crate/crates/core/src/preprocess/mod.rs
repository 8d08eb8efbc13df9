//! From filtered accident records to the trimmed, imputed, encoded and
//! labelled train/test datasets.

mod dataset;
mod encode;
mod impute;
mod split;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{sidecar_path, split_dataset, DatasetMeta, EncodedDataset, DATASET_FORMAT_VERSION};
pub use encode::{
    encode_rows, fit_encoder, normalize_category, CategoryMap, ColumnSpec, FeatureSchema,
    TARGET_NAME,
};
pub use impute::{apply_imputer, fit_imputer, ColumnFill, FeatureRow, FillValue, ImputationStats};
pub use split::{split_indices, SplitSpec};

use crate::features::{FeatureDef, FeatureKind, FeatureSelection};
use crate::ingest::{RawAccidentRecord, RawValue};
use crate::report::{summary_stats, SummaryStats};

pub const DEFAULT_THRESHOLD_MINUTES: f64 = 164.0;
pub const MIN_TRIM_ROWS: usize = 20;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("TooFewRows: {0} rows with positive duration, at least {MIN_TRIM_ROWS} required")]
    TooFewRows(usize),
    #[error("AllMissingColumn: column {0} has no observed training value")]
    AllMissingColumn(String),
    #[error("SchemaMismatch: {0}")]
    SchemaMismatch(String),
    #[error("EmptyDataset: no rows to split")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Minutes from `start` to `end`; negative when `end` precedes `start`.
pub fn compute_duration(start: NaiveDateTime, end: NaiveDateTime) -> f64 {
    let d = end - start;
    let nanos = d.subsec_nanos() as f64;
    (d.num_seconds() as f64 + nanos * 1e-9) / 60.0
}

/// 1 (short) iff `duration < threshold`, else 0 (long).
pub fn label_duration(duration: f64, threshold: f64) -> u8 {
    u8::from(duration < threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimResult {
    /// Input positions kept, ascending.
    pub retained: Vec<usize>,
    pub lower_cut: f64,
    pub upper_cut: f64,
}

/// Keep durations inside the `[lower_q, upper_q]` empirical quantile band.
///
/// Non-positive and non-finite durations are discarded before the quantiles
/// are taken; at least [`MIN_TRIM_ROWS`] must remain.
pub fn trim_outliers(
    durations: &[f64],
    lower_q: f64,
    upper_q: f64,
) -> Result<TrimResult, PreprocessError> {
    if !(0.0..=1.0).contains(&lower_q) || !(0.0..=1.0).contains(&upper_q) || lower_q > upper_q {
        return Err(PreprocessError::InvalidConfig(format!(
            "bad trim quantiles ({lower_q}, {upper_q})"
        )));
    }
    let positive: Vec<usize> = (0..durations.len())
        .filter(|&i| durations[i].is_finite() && durations[i] > 0.0)
        .collect();
    if positive.len() < MIN_TRIM_ROWS {
        return Err(PreprocessError::TooFewRows(positive.len()));
    }
    let sorted = crate::report::sorted_copy(&positive.iter().map(|&i| durations[i]).collect::<Vec<_>>());
    let lower_cut = crate::report::quantile_sorted(&sorted, lower_q);
    let upper_cut = crate::report::quantile_sorted(&sorted, upper_q);
    let retained = positive
        .into_iter()
        .filter(|&i| (lower_cut..=upper_cut).contains(&durations[i]))
        .collect();
    Ok(TrimResult {
        retained,
        lower_cut,
        upper_cut,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    Fixed { minutes: f64 },
    /// Mean trimmed duration of the training split.
    Auto,
}

impl Default for ThresholdMode {
    fn default() -> Self {
        ThresholdMode::Fixed {
            minutes: DEFAULT_THRESHOLD_MINUTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub split: SplitSpec,
    pub threshold: ThresholdMode,
    /// Fit imputation on all rows before splitting instead of the training split.
    pub impute_on_full: bool,
    pub features: FeatureSelection,
    pub trim_lower_q: f64,
    pub trim_upper_q: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            threshold: ThresholdMode::default(),
            impute_on_full: false,
            features: FeatureSelection::default(),
            trim_lower_q: 0.05,
            trim_upper_q: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub records_in: usize,
    pub dropped_nonpositive: usize,
    pub retained_after_trim: usize,
    pub trim_cuts: (f64, f64),
    pub durations_before_trim: SummaryStats,
    pub durations_after_trim: SummaryStats,
    pub threshold: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub train_short: usize,
    pub train_long: usize,
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: EncodedDataset,
    pub test: EncodedDataset,
    pub summary: PreprocessSummary,
}

/// Raw modelling cells of one record, with Day/Night mapped to flags and
/// category text normalized. Unrecognized Day/Night text counts as absent.
pub fn extract_features(rec: &RawAccidentRecord, features: &[FeatureDef]) -> FeatureRow {
    features
        .iter()
        .map(|f| {
            let v = rec.feature(f.name)?;
            match (f.kind, v) {
                (FeatureKind::DayNight, RawValue::Text(s)) => {
                    match s.trim().to_ascii_lowercase().as_str() {
                        "day" => Some(RawValue::Flag(true)),
                        "night" => Some(RawValue::Flag(false)),
                        _ => None,
                    }
                }
                (FeatureKind::Categorical, RawValue::Text(s)) => {
                    let s = normalize_category(&s);
                    (!s.is_empty()).then_some(RawValue::Text(s))
                }
                (_, v) => Some(v),
            }
        })
        .collect()
}

/// Full preprocessing: durations, trimming, split, threshold, imputation and
/// encoding.
pub fn prepare(
    records: &[RawAccidentRecord],
    config: &PreprocessConfig,
) -> Result<PreparedData, PreprocessError> {
    config.split.validate()?;
    let durations: Vec<f64> = records
        .iter()
        .map(|r| compute_duration(r.start_time, r.end_time))
        .collect();
    let positive: Vec<f64> = durations
        .iter()
        .copied()
        .filter(|d| d.is_finite() && *d > 0.0)
        .collect();
    let trim = trim_outliers(&durations, config.trim_lower_q, config.trim_upper_q)?;
    let kept_durations: Vec<f64> = trim.retained.iter().map(|&i| durations[i]).collect();

    let provisional = match config.threshold {
        ThresholdMode::Fixed { minutes } => minutes,
        ThresholdMode::Auto => kept_durations.iter().sum::<f64>() / kept_durations.len() as f64,
    };
    let provisional_labels: Vec<u8> = kept_durations
        .iter()
        .map(|&d| label_duration(d, provisional))
        .collect();
    let (train_idx, test_idx) = split_indices(&provisional_labels, &config.split)?;

    let threshold = match config.threshold {
        ThresholdMode::Fixed { minutes } => minutes,
        ThresholdMode::Auto => {
            train_idx.iter().map(|&i| kept_durations[i]).sum::<f64>() / train_idx.len() as f64
        }
    };
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(PreprocessError::InvalidConfig(format!(
            "threshold must be positive, got {threshold}"
        )));
    }

    let features = config.features.features();
    let rows: Vec<FeatureRow> = trim
        .retained
        .iter()
        .map(|&i| extract_features(&records[i], &features))
        .collect();
    let train_rows: Vec<FeatureRow> = train_idx.iter().map(|&i| rows[i].clone()).collect();
    let imputation = if config.impute_on_full {
        fit_imputer(&rows, &features)?
    } else {
        fit_imputer(&train_rows, &features)?
    };
    let imputed = apply_imputer(&rows, &imputation)?;
    let train_imputed: Vec<FeatureRow> = train_idx.iter().map(|&i| imputed[i].clone()).collect();
    let schema = fit_encoder(&train_imputed, &features);
    let encoded = encode_rows(&imputed, &schema)?;

    let meta = DatasetMeta {
        format_version: DATASET_FORMAT_VERSION,
        schema,
        imputation,
        threshold,
        trim_cuts: Some((trim.lower_cut, trim.upper_cut)),
    };
    let all = EncodedDataset::new(meta, encoded, kept_durations.clone())?;
    let train = all.select(&train_idx);
    let test = all.select(&test_idx);
    let train_short = train.labels.iter().filter(|&&l| l == 1).count();

    let summary = PreprocessSummary {
        records_in: records.len(),
        dropped_nonpositive: records.len() - positive.len(),
        retained_after_trim: kept_durations.len(),
        trim_cuts: (trim.lower_cut, trim.upper_cut),
        durations_before_trim: summary_stats(&positive)
            .map_err(|_| PreprocessError::TooFewRows(positive.len()))?,
        durations_after_trim: summary_stats(&kept_durations)
            .map_err(|_| PreprocessError::TooFewRows(0))?,
        threshold,
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        train_short,
        train_long: train.n_rows() - train_short,
    };
    Ok(PreparedData {
        train,
        test,
        summary,
    })
}

/// Encode raw records with an already fitted schema and imputer, for
/// prediction on new data. Durations are not needed; they are reported as 0.
pub fn encode_records(
    records: &[RawAccidentRecord],
    schema: &FeatureSchema,
    imputation: &ImputationStats,
) -> Result<Vec<f64>, PreprocessError> {
    let features: Vec<FeatureDef> = schema
        .columns
        .iter()
        .map(|c| {
            crate::features::MODEL_FEATURES
                .iter()
                .find(|f| f.name == c.name)
                .copied()
                .ok_or_else(|| PreprocessError::SchemaMismatch(format!("unknown column {}", c.name)))
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<FeatureRow> = records.iter().map(|r| extract_features(r, &features)).collect();
    let imputed = apply_imputer(&rows, imputation)?;
    encode_rows(&imputed, schema)
}
