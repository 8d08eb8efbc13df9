//! Regression errors in minutes and the binary classification report, with
//! class 1 (short) as the positive class.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("EmptyInput: no prediction pairs")]
    EmptyInput,
    #[error("LengthMismatch: {actual} actual vs {predicted} predicted values")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("ZeroActual: actual value at index {0} is zero")]
    ZeroActual(usize),
    #[error("InvalidLabel: label {0} is not 0 or 1")]
    InvalidLabel(u8),
}

fn check_pairs(actual: &[f64], predicted: &[f64]) -> Result<(), MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

/// √(Σ(y−x)²/n).
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check_pairs(actual, predicted)?;
    let ss: f64 = actual.iter().zip(predicted).map(|(y, x)| (y - x) * (y - x)).sum();
    Ok((ss / actual.len() as f64).sqrt())
}

/// Σ|y−x|/n, in the units of the inputs.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check_pairs(actual, predicted)?;
    let s: f64 = actual.iter().zip(predicted).map(|(y, x)| (y - x).abs()).sum();
    Ok(s / actual.len() as f64)
}

/// Mean relative error (1/N)·Σ|y−x|/y, dimensionless.
pub fn mean_relative_error(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check_pairs(actual, predicted)?;
    if let Some(i) = actual.iter().position(|&y| y == 0.0) {
        return Err(MetricsError::ZeroActual(i));
    }
    let s: f64 = actual.iter().zip(predicted).map(|(y, x)| ((y - x) / y).abs()).sum();
    Ok(s / actual.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    /// `None` when some actual value is zero.
    pub relative_error: Option<f64>,
}

impl RegressionMetrics {
    pub fn compute(actual: &[f64], predicted: &[f64]) -> Result<Self, MetricsError> {
        Ok(Self {
            n: actual.len(),
            rmse: rmse(actual, predicted)?,
            mae: mae(actual, predicted)?,
            relative_error: mean_relative_error(actual, predicted).ok(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// Counts as (true positives, predicted positives, actual positives)
    /// when `class` is treated as positive.
    fn counts_for(&self, class: u8) -> (u64, u64, u64) {
        if class == 1 {
            (self.tp, self.tp + self.fp, self.tp + self.fn_)
        } else {
            (self.tn, self.tn + self.fn_, self.tn + self.fp)
        }
    }
}

/// `num / den`, with 0 for an empty denominator.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    /// Index 0 = long, 1 = short.
    pub per_class: [ClassMetrics; 2],
    pub macro_avg: AveragedMetrics,
    pub weighted_avg: AveragedMetrics,
}

pub fn confusion_matrix(truth: &[u8], predicted: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            actual: truth.len(),
            predicted: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut m = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (1, 1) => m.tp += 1,
            (0, 1) => m.fp += 1,
            (0, 0) => m.tn += 1,
            (1, 0) => m.fn_ += 1,
            (t, p) => return Err(MetricsError::InvalidLabel(t.max(p))),
        }
    }
    Ok(m)
}

pub fn classification_report(truth: &[u8], predicted: &[u8]) -> Result<ClassificationReport, MetricsError> {
    Ok(ClassificationReport::from_confusion(confusion_matrix(truth, predicted)?))
}

impl ClassificationReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let per_class = [0u8, 1].map(|c| {
            let (hit, predicted, actual) = confusion.counts_for(c);
            let precision = ratio(hit, predicted);
            let recall = ratio(hit, actual);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics { precision, recall, f1, support: actual }
        });
        let macro_avg = AveragedMetrics {
            precision: (per_class[0].precision + per_class[1].precision) / 2.0,
            recall: (per_class[0].recall + per_class[1].recall) / 2.0,
            f1: (per_class[0].f1 + per_class[1].f1) / 2.0,
        };
        let n = confusion.total() as f64;
        let w = |f: fn(&ClassMetrics) -> f64| {
            per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / n
        };
        let weighted_avg = AveragedMetrics {
            precision: w(|c| c.precision),
            recall: w(|c| c.recall),
            f1: w(|c| c.f1),
        };
        Self {
            confusion,
            accuracy: confusion.accuracy(),
            per_class,
            macro_avg,
            weighted_avg,
        }
    }

    /// Fixed-width table: one row per class, then the two averages.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14}{:>10}{:>10}{:>10}{:>10}", "", "precision", "recall", "f1-score", "support");
        for (name, c) in ["long (0)", "short (1)"].iter().zip(&self.per_class) {
            let _ = writeln!(s, "{:<14}{:>10.4}{:>10.4}{:>10.4}{:>10}", name, c.precision, c.recall, c.f1, c.support);
        }
        let total = self.confusion.total();
        let _ = writeln!(s, "{:<14}{:>10}{:>10}{:>10.4}{:>10}", "accuracy", "", "", self.accuracy, total);
        for (name, a) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted_avg)] {
            let _ = writeln!(s, "{:<14}{:>10.4}{:>10.4}{:>10.4}{:>10}", name, a.precision, a.recall, a.f1, total);
        }
        s
    }
}
