use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_BINS: usize = 255;
/// Bin indices are stored as `u8`.
pub const MAX_SUPPORTED_BINS: usize = 256;

/// Bin edges for one column.
///
/// The bin of `v` is the number of edges strictly below `v`. With at most
/// `max_bins` distinct values the edges are midpoints between neighbours;
/// otherwise they sit at evenly spaced interpolated quantiles of the distinct
/// values.
pub fn build_bins(values: &[f64], max_bins: usize) -> Vec<f64> {
    let max_bins = max_bins.clamp(1, MAX_SUPPORTED_BINS);
    let mut distinct: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let k = distinct.len();
    if k <= 1 {
        return Vec::new();
    }
    if k <= max_bins {
        return distinct
            .windows(2)
            .map(|w| {
                let mid = w[0] + (w[1] - w[0]) / 2.0;
                if mid < w[1] {
                    mid
                } else {
                    w[0]
                }
            })
            .collect();
    }
    let mut edges: Vec<f64> = (1..max_bins)
        .map(|i| {
            let pos = i as f64 * (k - 1) as f64 / max_bins as f64;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if lo + 1 < k {
                distinct[lo] + (distinct[lo + 1] - distinct[lo]) * frac
            } else {
                distinct[lo]
            }
        })
        .collect();
    edges.dedup();
    edges
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMap {
    /// Ascending edges per feature.
    pub edges: Vec<Vec<f64>>,
}

impl BinMap {
    /// Fit edges for every column of a row-major matrix.
    pub fn fit(values: &[f64], n_features: usize, max_bins: usize) -> Self {
        let n_rows = values.len().checked_div(n_features).unwrap_or(0);
        let edges = (0..n_features)
            .into_par_iter()
            .map(|f| {
                let col: Vec<f64> = (0..n_rows).map(|i| values[i * n_features + f]).collect();
                build_bins(&col, max_bins)
            })
            .collect();
        Self { edges }
    }

    pub fn n_features(&self) -> usize {
        self.edges.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    pub fn bin(&self, feature: usize, value: f64) -> u8 {
        self.edges[feature].partition_point(|&e| e < value) as u8
    }

    /// Largest raw value that still goes left at `threshold_bin`.
    pub fn threshold_value(&self, feature: usize, threshold_bin: u8) -> f64 {
        self.edges[feature]
            .get(threshold_bin as usize)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    pub fn bin_matrix(&self, values: &[f64]) -> BinnedMatrix {
        let k = self.n_features();
        let n_rows = values.len().checked_div(k).unwrap_or(0);
        let columns: Vec<Vec<u8>> = (0..k)
            .into_par_iter()
            .map(|f| (0..n_rows).map(|i| self.bin(f, values[i * k + f])).collect())
            .collect();
        BinnedMatrix {
            n_rows,
            n_bins: (0..k).map(|f| self.n_bins(f)).collect(),
            bins: columns.concat(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (f, e) in self.edges.iter().enumerate() {
            if e.len() >= MAX_SUPPORTED_BINS {
                return Err(format!("feature {f} has {} edges", e.len()));
            }
            if e.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
                return Err(format!("feature {f} edges are not strictly increasing"));
            }
        }
        Ok(())
    }
}

/// Column-major bin indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedMatrix {
    pub n_rows: usize,
    pub n_bins: Vec<usize>,
    bins: Vec<u8>,
}

impl BinnedMatrix {
    /// Build directly from column-major bin indices.
    pub fn from_columns(columns: Vec<Vec<u8>>) -> Self {
        let n_rows = columns.first().map_or(0, Vec::len);
        assert!(columns.iter().all(|c| c.len() == n_rows), "ragged columns");
        let n_bins = columns
            .iter()
            .map(|c| c.iter().copied().max().map_or(1, |m| m as usize + 1))
            .collect();
        Self {
            n_rows,
            n_bins,
            bins: columns.concat(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_bins.len()
    }

    pub fn column(&self, feature: usize) -> &[u8] {
        &self.bins[feature * self.n_rows..(feature + 1) * self.n_rows]
    }

    pub fn get(&self, row: usize, feature: usize) -> u8 {
        self.bins[feature * self.n_rows + row]
    }

    pub fn row(&self, row: usize) -> Vec<u8> {
        (0..self.n_features()).map(|f| self.get(row, f)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_column_has_one_bin() {
        let e = build_bins(&[4.0; 10], 255);
        assert!(e.is_empty());
        let m = BinMap { edges: vec![e] };
        assert_eq!(m.bin(0, 4.0), 0);
        assert_eq!(m.bin(0, -100.0), 0);
    }

    #[test]
    fn three_values_three_bins() {
        let e = build_bins(&[3.0, 1.0, 2.0, 2.0], 255);
        assert_eq!(e.len(), 2);
        let m = BinMap { edges: vec![e] };
        assert_eq!([m.bin(0, 1.0), m.bin(0, 2.0), m.bin(0, 3.0)], [0, 1, 2]);
    }

    #[test]
    fn million_uniform_values_fill_bins_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
        let e = build_bins(&v, 255);
        assert_eq!(e.len(), 254);
        let m = BinMap { edges: vec![e] };
        let mut counts = vec![0usize; 255];
        for &x in &v {
            counts[m.bin(0, x) as usize] += 1;
        }
        let expected = 1_000_000.0 / 255.0;
        for c in counts {
            assert!((c as f64 - expected).abs() <= 0.02 * expected, "{c}");
        }
    }

    #[test]
    fn threshold_value_matches_bin_rule() {
        let v: Vec<f64> = (0..50).map(|i| (i * i) as f64).collect();
        let m = BinMap { edges: vec![build_bins(&v, 8)] };
        m.validate().unwrap();
        for t in 0..(m.n_bins(0) - 1) as u8 {
            let edge = m.threshold_value(0, t);
            for &x in &v {
                assert_eq!(m.bin(0, x) <= t, x <= edge);
            }
        }
    }

    #[test]
    fn bin_matrix_is_column_major() {
        let values = vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0];
        let m = BinMap::fit(&values, 2, 255);
        let b = m.bin_matrix(&values);
        assert_eq!(b.column(0), &[0, 1, 2]);
        assert_eq!(b.row(1), vec![1, 1]);
        assert_eq!(b.n_bins, vec![3, 3]);
    }
}
