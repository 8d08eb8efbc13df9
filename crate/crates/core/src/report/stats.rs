//! Descriptive statistics: summaries, five-number boxplot data, Pearson
//! correlation and fixed-bin histograms.

use serde::{Deserialize, Serialize};

use super::ReportError;

/// Linear-interpolation quantile of an ascending slice: the value at 0-based
/// position `(n - 1) * q`, interpolating between neighbouring order statistics.
///
/// Panics if `sorted` is empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let q = q.clamp(0.0, 1.0);
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats, ReportError> {
    if values.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ReportError::NonFinite);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(SummaryStats {
        count: values.len(),
        max,
        min,
        // rounding can push the mean a hair outside [min, max] for constant input
        mean: mean.clamp(min, max),
        std: var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn five_number(values: &[f64]) -> Result<FiveNumber, ReportError> {
    if values.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let s = sorted_copy(values);
    Ok(FiveNumber {
        min: s[0],
        q1: quantile_sorted(&s, 0.25),
        median: quantile_sorted(&s, 0.5),
        q3: quantile_sorted(&s, 0.75),
        max: s[s.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// Row-major `names.len()` squared Pearson coefficients.
    pub values: Vec<f64>,
    /// True for columns with zero variance; their coefficients are reported as 0.
    pub constant: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.names.len() + j]
    }
}

/// Pairwise Pearson correlation of equal-length columns.
pub fn correlation_matrix(
    names: &[String],
    columns: &[Vec<f64>],
) -> Result<CorrelationMatrix, ReportError> {
    let k = columns.len();
    if names.len() != k {
        return Err(ReportError::LengthMismatch);
    }
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(ReportError::TooFewRows(n));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(ReportError::LengthMismatch);
    }
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let constant: Vec<bool> = columns
        .iter()
        .map(|c| c.iter().all(|v| *v == c[0]))
        .collect();

    let mut values = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let r = if constant[i] || constant[j] {
                0.0
            } else if i == j {
                1.0
            } else {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            values[i * k + j] = r;
            values[j * k + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: names.to_vec(),
        values,
        constant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// count / (n * width); integrates to 1 over the range.
    pub density: f64,
}

/// Equal-width histogram over the data range. The last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>, ReportError> {
    if values.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = values.len() as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lower: lo + i as f64 * width,
            upper: lo + (i + 1) as f64 * width,
            count,
            density: count as f64 / (n * width),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub index: usize,
    pub actual: f64,
    pub predicted: f64,
}

/// The first `first_n` (actual, predicted) pairs in their given order.
pub fn prediction_series(
    actual: &[f64],
    predicted: &[f64],
    first_n: usize,
) -> Result<Vec<SeriesPoint>, ReportError> {
    if actual.len() != predicted.len() {
        return Err(ReportError::LengthMismatch);
    }
    if actual.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    Ok(actual
        .iter()
        .zip(predicted)
        .take(first_n)
        .enumerate()
        .map(|(index, (&actual, &predicted))| SeriesPoint {
            index,
            actual,
            predicted,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantiles_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile_sorted(&v, 0.05) - 5.95).abs() < 1e-12);
        assert!((quantile_sorted(&v, 0.95) - 95.05).abs() < 1e-12);
        let f = five_number(&v).unwrap();
        assert!((f.q1 - 25.75).abs() < 1e-12);
        assert!((f.median - 50.5).abs() < 1e-12);
        assert!((f.q3 - 75.25).abs() < 1e-12);
        assert_eq!((f.min, f.max), (1.0, 100.0));
    }

    #[test]
    fn summary_of_small_inputs() {
        let s = summary_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
        let s = summary_stats(&[7.0]).unwrap();
        assert_eq!((s.max, s.min, s.mean, s.std), (7.0, 7.0, 7.0, 0.0));
        assert!(matches!(summary_stats(&[]), Err(ReportError::EmptyInput)));
        assert!(matches!(five_number(&[]), Err(ReportError::EmptyInput)));
    }

    #[test]
    fn constant_five_number() {
        let f = five_number(&[3.0; 9]).unwrap();
        assert!([f.min, f.q1, f.median, f.q3, f.max].iter().all(|v| *v == 3.0));
    }

    #[test]
    fn pearson_by_hand() {
        let names: Vec<String> = ["x", "y", "z", "c"].iter().map(|s| s.to_string()).collect();
        let cols = vec![
            vec![1.0, 2.0, 3.0, 4.0],
            vec![2.0, 4.0, 6.0, 8.0],
            vec![8.0, 6.0, 4.0, 2.0],
            vec![5.0; 4],
        ];
        let m = correlation_matrix(&names, &cols).unwrap();
        assert!((m.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((m.get(0, 2) + 1.0).abs() < 1e-12);
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(3, 0), 0.0);
        assert_eq!(m.get(3, 3), 0.0);
        assert_eq!(m.constant, vec![false, false, false, true]);
    }

    #[test]
    fn series_clamps_and_passes_through() {
        let a: Vec<f64> = (0..250).map(f64::from).collect();
        let p: Vec<f64> = a.iter().map(|v| v * 2.0).collect();
        let s = prediction_series(&a, &p, 100).unwrap();
        assert_eq!(s.len(), 100);
        assert_eq!(s[7], SeriesPoint { index: 7, actual: 7.0, predicted: 14.0 });
        assert_eq!(prediction_series(&a[..50], &p[..50], 100).unwrap().len(), 50);
    }

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let h = histogram(&v, 64).unwrap();
        assert_eq!(h.len(), 64);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 1000);
        let area: f64 = h.iter().map(|b| b.density * (b.upper - b.lower)).sum();
        assert!((area - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn summary_and_five_number_agree(v in proptest::collection::vec(-1e6f64..1e6, 1..200)) {
            let s = summary_stats(&v).unwrap();
            let f = five_number(&v).unwrap();
            prop_assert_eq!(s.min, f.min);
            prop_assert_eq!(s.max, f.max);
            prop_assert!(s.min <= s.mean && s.mean <= s.max && s.std >= 0.0);
            prop_assert!(f.min <= f.q1 && f.q1 <= f.median && f.median <= f.q3 && f.q3 <= f.max);
        }

        #[test]
        fn correlation_is_permutation_invariant_and_affine_stable(
            rows in proptest::collection::vec((-100f64..100.0, -100f64..100.0, -100f64..100.0), 3..40),
            scale in 0.1f64..10.0,
            shift in -50f64..50.0,
        ) {
            let names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
            let cols = |rs: &[(f64, f64, f64)]| vec![
                rs.iter().map(|r| r.0).collect::<Vec<_>>(),
                rs.iter().map(|r| r.1).collect(),
                rs.iter().map(|r| r.2).collect(),
            ];
            let m = correlation_matrix(&names, &cols(&rows)).unwrap();
            let mut rev = rows.clone();
            rev.reverse();
            let mr = correlation_matrix(&names, &cols(&rev)).unwrap();
            for (a, b) in m.values.iter().zip(&mr.values) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!(m.get(i, j).abs() <= 1.0);
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                }
            }
            let mut c = cols(&rows);
            let neg: Vec<f64> = c[0].iter().map(|v| -scale * v + shift).collect();
            c[0] = c[0].iter().map(|v| scale * v + shift).collect();
            let ms = correlation_matrix(&names, &c).unwrap();
            c[0] = neg;
            let mn = correlation_matrix(&names, &c).unwrap();
            for j in 1..3 {
                if !m.constant[0] {
                    prop_assert!((ms.get(0, j) - m.get(0, j)).abs() < 1e-6);
                    prop_assert!((mn.get(0, j) + m.get(0, j)).abs() < 1e-6);
                }
            }
        }
    }
}
