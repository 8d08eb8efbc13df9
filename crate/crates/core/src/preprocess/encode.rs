use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::impute::FeatureRow;
use super::PreprocessError;
use crate::features::{FeatureDef, FeatureKind};
use crate::ingest::RawValue;

pub const TARGET_NAME: &str = "duration_minutes";

/// Category text to integer code. Code 0 is reserved for unseen categories;
/// known categories get 1..=k by descending training frequency, ties broken
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMap {
    /// `categories[i]` has code `i + 1`.
    pub categories: Vec<String>,
}

impl CategoryMap {
    pub fn fit<'a>(values: impl Iterator<Item = &'a str>) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for v in values {
            *counts.entry(v).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self {
            categories: ranked.into_iter().map(|(s, _)| s.to_string()).collect(),
        }
    }

    pub fn lookup(&self) -> HashMap<&str, u32> {
        self.categories
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as u32 + 1))
            .collect()
    }

    pub fn code(&self, category: &str) -> u32 {
        self.categories
            .iter()
            .position(|c| c == category)
            .map_or(0, |i| i as u32 + 1)
    }

    pub fn decode(&self, code: u32) -> Option<&str> {
        code.checked_sub(1)
            .and_then(|i| self.categories.get(i as usize))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

/// Trim and lowercase category text so "CALM" and " Calm" share a code.
pub fn normalize_category(s: &str) -> String {
    s.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<CategoryMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnSpec>,
    pub target_name: String,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// SHA-256 over the canonical JSON form. Models record it so they refuse
    /// rows encoded under a different schema.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(PreprocessError::SchemaMismatch(format!(
                    "duplicate column {}",
                    c.name
                )));
            }
            if c.encoder.is_some() != (c.kind == FeatureKind::Categorical) {
                return Err(PreprocessError::SchemaMismatch(format!(
                    "column {} encoder does not match its kind",
                    c.name
                )));
            }
        }
        Ok(())
    }
}

pub fn fit_encoder(rows: &[FeatureRow], features: &[FeatureDef]) -> FeatureSchema {
    let columns = features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let encoder = (f.kind == FeatureKind::Categorical).then(|| {
                CategoryMap::fit(rows.iter().filter_map(|r| match r.get(j) {
                    Some(Some(RawValue::Text(s))) => Some(s.as_str()),
                    _ => None,
                }))
            });
            ColumnSpec {
                name: f.name.to_string(),
                kind: f.kind,
                encoder,
            }
        })
        .collect();
    FeatureSchema {
        columns,
        target_name: TARGET_NAME.to_string(),
    }
}

/// Encode imputed rows into a row-major matrix following `schema`.
pub fn encode_rows(rows: &[FeatureRow], schema: &FeatureSchema) -> Result<Vec<f64>, PreprocessError> {
    let lookups: Vec<Option<HashMap<&str, u32>>> = schema
        .columns
        .iter()
        .map(|c| c.encoder.as_ref().map(CategoryMap::lookup))
        .collect();
    let mut out = Vec::with_capacity(rows.len() * schema.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != schema.len() {
            return Err(PreprocessError::SchemaMismatch(format!(
                "row {i} has {} cells, schema has {}",
                row.len(),
                schema.len()
            )));
        }
        for ((cell, col), lookup) in row.iter().zip(&schema.columns).zip(&lookups) {
            let v = match (col.kind, cell) {
                (_, None) => {
                    return Err(PreprocessError::SchemaMismatch(format!(
                        "row {i} lacks a value for {}",
                        col.name
                    )))
                }
                (FeatureKind::Numeric, Some(RawValue::Number(x))) => *x,
                (FeatureKind::Boolean | FeatureKind::DayNight, Some(RawValue::Flag(b))) => {
                    f64::from(u8::from(*b))
                }
                (FeatureKind::Categorical, Some(RawValue::Text(s))) => {
                    let lookup = lookup.as_ref().expect("categorical column has encoder");
                    f64::from(lookup.get(s.as_str()).copied().unwrap_or(0))
                }
                (kind, Some(other)) => {
                    return Err(PreprocessError::SchemaMismatch(format!(
                        "row {i}: {:?} is not a valid {kind:?} value for {}",
                        other, col.name
                    )))
                }
            };
            out.push(v);
        }
    }
    Ok(out)
}
