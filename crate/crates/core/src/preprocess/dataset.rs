//! The encoded modelling dataset and its on-disk form: a plain CSV of encoded
//! values plus a JSON sidecar carrying the schema, encoder maps and
//! imputation statistics.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::encode::FeatureSchema;
use super::impute::ImputationStats;
use super::split::{split_indices, SplitSpec};
use super::PreprocessError;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub schema: FeatureSchema,
    pub imputation: ImputationStats,
    /// Short/long cut in minutes; label 1 iff duration < threshold.
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trim_cuts: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub meta: DatasetMeta,
    /// Row-major, `n_rows * n_features`.
    pub values: Vec<f64>,
    pub durations: Vec<f64>,
    pub labels: Vec<u8>,
}

impl EncodedDataset {
    pub fn new(
        meta: DatasetMeta,
        values: Vec<f64>,
        durations: Vec<f64>,
    ) -> Result<Self, PreprocessError> {
        let k = meta.schema.len();
        if k == 0 || values.len() != durations.len() * k {
            return Err(PreprocessError::SchemaMismatch(format!(
                "{} values do not fill {} rows of {} columns",
                values.len(),
                durations.len(),
                k
            )));
        }
        if values.iter().chain(&durations).any(|v| !v.is_finite()) {
            return Err(PreprocessError::SchemaMismatch("non-finite cell".into()));
        }
        let labels = durations
            .iter()
            .map(|&d| super::label_duration(d, meta.threshold))
            .collect();
        Ok(Self {
            meta,
            values,
            durations,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.durations.len()
    }

    pub fn n_features(&self) -> usize {
        self.meta.schema.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.n_features();
        &self.values[i * k..(i + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_features())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.meta.schema
    }

    /// A new dataset holding `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let k = self.n_features();
        let mut values = Vec::with_capacity(indices.len() * k);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            meta: self.meta.clone(),
            values,
            durations: indices.iter().map(|&i| self.durations[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// SHA-256 over the schema fingerprint and every encoded cell.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.meta.schema.fingerprint().as_bytes());
        for v in self.values.iter().chain(&self.durations) {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(&self.labels);
        hex::encode(h.finalize())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PreprocessError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.meta.schema.names();
        header.push(self.meta.schema.target_name.clone());
        header.push(LABEL_COLUMN.to_string());
        w.write_record(&header)?;
        let mut cells = Vec::with_capacity(header.len());
        for (i, row) in self.rows().enumerate() {
            cells.clear();
            cells.extend(row.iter().map(f64::to_string));
            cells.push(self.durations[i].to_string());
            cells.push(self.labels[i].to_string());
            w.write_record(&cells)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(meta: DatasetMeta, input: R) -> Result<Self, PreprocessError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let mut expected = meta.schema.names();
        expected.push(meta.schema.target_name.clone());
        expected.push(LABEL_COLUMN.to_string());
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(PreprocessError::SchemaMismatch(
                "encoded CSV header does not match the sidecar schema".into(),
            ));
        }
        let k = meta.schema.len();
        let mut values = Vec::new();
        let mut durations = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    PreprocessError::SchemaMismatch(format!("row {}: bad number {s:?}", i + 1))
                })
            };
            for cell in rec.iter().take(k) {
                values.push(parse(cell)?);
            }
            durations.push(parse(&rec[k])?);
            labels.push(rec[k + 1].parse::<u8>().map_err(|_| {
                PreprocessError::SchemaMismatch(format!("row {}: bad label", i + 1))
            })?);
        }
        let ds = Self::new(meta, values, durations)?;
        if ds.labels != labels {
            return Err(PreprocessError::SchemaMismatch(
                "stored labels disagree with durations and threshold".into(),
            ));
        }
        Ok(ds)
    }

    /// Write `<path>` (CSV) and its sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<(), PreprocessError> {
        self.write_csv(BufWriter::new(File::create(csv_path)?))?;
        let mut side = BufWriter::new(File::create(sidecar_path(csv_path))?);
        serde_json::to_writer_pretty(&mut side, &self.meta)?;
        side.write_all(b"\n")?;
        side.flush()?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self, PreprocessError> {
        let meta: DatasetMeta =
            serde_json::from_reader(BufReader::new(File::open(sidecar_path(csv_path))?))?;
        if meta.format_version != DATASET_FORMAT_VERSION {
            return Err(PreprocessError::SchemaMismatch(format!(
                "unsupported dataset format_version {}",
                meta.format_version
            )));
        }
        meta.schema.validate()?;
        Self::read_csv(meta, BufReader::new(File::open(csv_path)?))
    }
}

/// `data/train.csv` -> `data/train.schema.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("schema.json")
}

pub fn split_dataset(
    ds: &EncodedDataset,
    spec: &SplitSpec,
) -> Result<(EncodedDataset, EncodedDataset), PreprocessError> {
    let (train, test) = split_indices(&ds.labels, spec)?;
    Ok((ds.select(&train), ds.select(&test)))
}
