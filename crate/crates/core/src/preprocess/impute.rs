use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::features::{FeatureDef, FeatureKind};
use crate::ingest::RawValue;

/// One modelling row: a cell per feature, `None` where the value is absent.
pub type FeatureRow = Vec<Option<RawValue>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fill", content = "value", rename_all = "snake_case")]
pub enum FillValue {
    Mean(f64),
    ModeFlag(bool),
    ModeText(String),
}

impl FillValue {
    fn as_raw(&self) -> RawValue {
        match self {
            FillValue::Mean(v) => RawValue::Number(*v),
            FillValue::ModeFlag(b) => RawValue::Flag(*b),
            FillValue::ModeText(s) => RawValue::Text(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnFill {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(flatten)]
    pub fill: FillValue,
}

/// Per-column fill values: mean for numerics, mode for everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationStats {
    pub columns: Vec<ColumnFill>,
}

/// Most frequent value; ties go to the smallest value.
fn mode<T: Ord + Clone>(values: impl Iterator<Item = T>) -> Option<T> {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    // max_by_key keeps the last maximum, so iterate in reverse key order
    counts
        .into_iter()
        .rev()
        .max_by_key(|(_, c)| *c)
        .map(|(v, _)| v)
}

pub fn fit_imputer(
    rows: &[FeatureRow],
    features: &[FeatureDef],
) -> Result<ImputationStats, PreprocessError> {
    let mut columns = Vec::with_capacity(features.len());
    for (j, feat) in features.iter().enumerate() {
        let cells = rows.iter().filter_map(|r| r.get(j).and_then(Option::as_ref));
        let fill = match feat.kind {
            FeatureKind::Numeric => {
                let (sum, n) = cells.fold((0.0, 0usize), |(s, n), v| match v {
                    RawValue::Number(x) => (s + x, n + 1),
                    _ => (s, n),
                });
                (n > 0).then(|| FillValue::Mean(sum / n as f64))
            }
            FeatureKind::Boolean | FeatureKind::DayNight => mode(cells.filter_map(|v| match v {
                RawValue::Flag(b) => Some(*b),
                _ => None,
            }))
            .map(FillValue::ModeFlag),
            FeatureKind::Categorical => mode(cells.filter_map(|v| match v {
                RawValue::Text(s) => Some(s.clone()),
                _ => None,
            }))
            .map(FillValue::ModeText),
        };
        let fill = fill.ok_or_else(|| PreprocessError::AllMissingColumn(feat.name.to_string()))?;
        columns.push(ColumnFill {
            name: feat.name.to_string(),
            kind: feat.kind,
            fill,
        });
    }
    Ok(ImputationStats { columns })
}

/// Replace every absent cell with its column's fill value.
pub fn apply_imputer(
    rows: &[FeatureRow],
    stats: &ImputationStats,
) -> Result<Vec<FeatureRow>, PreprocessError> {
    rows.iter()
        .map(|row| {
            if row.len() != stats.columns.len() {
                return Err(PreprocessError::SchemaMismatch(format!(
                    "row has {} cells, imputer expects {}",
                    row.len(),
                    stats.columns.len()
                )));
            }
            Ok(row
                .iter()
                .zip(&stats.columns)
                .map(|(cell, col)| Some(cell.clone().unwrap_or_else(|| col.fill.as_raw())))
                .collect())
        })
        .collect()
}
