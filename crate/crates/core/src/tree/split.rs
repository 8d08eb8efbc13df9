use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bins::BinnedMatrix;

/// Additive per-sample or per-bin statistics.
///
/// Gini: `sum = [weight of class 0, weight of class 1]`.
/// Squared loss: `sum = [gradient, hessian]`.
/// `count` is the (bootstrap-weighted) number of samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStats {
    pub sum: [f64; 2],
    pub count: f64,
}

impl BinStats {
    pub fn class(label: u8, weight: f64) -> Self {
        let mut sum = [0.0; 2];
        sum[usize::from(label.min(1))] = weight;
        Self { sum, count: weight }
    }

    pub fn gradient(grad: f64, hess: f64) -> Self {
        Self {
            sum: [grad, hess],
            count: 1.0,
        }
    }

    pub fn add(&mut self, other: &BinStats) {
        self.sum[0] += other.sum[0];
        self.sum[1] += other.sum[1];
        self.count += other.count;
    }

    pub fn minus(&self, other: &BinStats) -> BinStats {
        BinStats {
            sum: [self.sum[0] - other.sum[0], self.sum[1] - other.sum[1]],
            count: self.count - other.count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "impurity", rename_all = "snake_case")]
pub enum Objective {
    Gini,
    SquaredLoss { lambda_l2: f64 },
}

impl Objective {
    pub fn gini(s: &BinStats) -> f64 {
        let n = s.sum[0] + s.sum[1];
        if n <= 0.0 {
            return 0.0;
        }
        let (p0, p1) = (s.sum[0] / n, s.sum[1] / n);
        1.0 - p0 * p0 - p1 * p1
    }

    fn score(lambda: f64, s: &BinStats) -> f64 {
        let denom = s.sum[1] + lambda;
        if denom <= 0.0 {
            0.0
        } else {
            s.sum[0] * s.sum[0] / denom
        }
    }

    /// Gini: impurity decrease weighted by child share.
    /// Squared loss: `G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)`.
    pub fn gain(&self, parent: &BinStats, left: &BinStats, right: &BinStats) -> f64 {
        match *self {
            Objective::Gini => {
                let n = parent.sum[0] + parent.sum[1];
                let nl = left.sum[0] + left.sum[1];
                let nr = right.sum[0] + right.sum[1];
                Self::gini(parent) - nl / n * Self::gini(left) - nr / n * Self::gini(right)
            }
            Objective::SquaredLoss { lambda_l2 } => {
                Self::score(lambda_l2, left) + Self::score(lambda_l2, right)
                    - Self::score(lambda_l2, parent)
            }
        }
    }
}

/// True when `gain` beats `best` by more than rounding noise; near-equal
/// gains keep the earlier (lower feature, lower threshold) candidate.
pub fn improves(gain: f64, best: f64) -> bool {
    gain > best + 1e-12 * (1.0 + best.abs())
}

/// Per-bin statistics for a subset of features of one node.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub features: Vec<usize>,
    offsets: Vec<usize>,
    stats: Vec<BinStats>,
}

const PARALLEL_WORK: usize = 1 << 16;

impl Histogram {
    pub fn build(
        data: &BinnedMatrix,
        samples: &[u32],
        sample_stats: &[BinStats],
        features: &[usize],
    ) -> Self {
        let mut offsets = Vec::with_capacity(features.len() + 1);
        offsets.push(0);
        for &f in features {
            offsets.push(offsets.last().unwrap() + data.n_bins[f]);
        }
        let mut stats = vec![BinStats::default(); *offsets.last().unwrap()];

        let mut slices: Vec<(usize, &mut [BinStats])> = Vec::with_capacity(features.len());
        let mut rest: &mut [BinStats] = &mut stats;
        for &f in features {
            let (head, tail) = rest.split_at_mut(data.n_bins[f]);
            slices.push((f, head));
            rest = tail;
        }
        let fill = |(f, hist): (usize, &mut [BinStats])| {
            let col = data.column(f);
            for &i in samples {
                hist[col[i as usize] as usize].add(&sample_stats[i as usize]);
            }
        };
        if samples.len() * features.len() >= PARALLEL_WORK {
            slices.into_par_iter().for_each(fill);
        } else {
            slices.into_iter().for_each(fill);
        }
        Self {
            features: features.to_vec(),
            offsets,
            stats,
        }
    }

    /// `self - other`, for two histograms over the same features.
    pub fn subtract(&self, other: &Histogram) -> Histogram {
        debug_assert_eq!(self.features, other.features);
        Histogram {
            features: self.features.clone(),
            offsets: self.offsets.clone(),
            stats: self
                .stats
                .iter()
                .zip(&other.stats)
                .map(|(a, b)| a.minus(b))
                .collect(),
        }
    }

    pub fn feature_bins(&self, feature: usize) -> Option<&[BinStats]> {
        let k = self.features.iter().position(|&f| f == feature)?;
        Some(&self.stats[self.offsets[k]..self.offsets[k + 1]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub objective: Objective,
    pub min_samples_leaf: usize,
    pub min_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Samples with bin <= threshold go left.
    pub threshold_bin: u8,
    pub gain: f64,
    pub left: BinStats,
    pub right: BinStats,
}

/// Best split over `features` (scanned in ascending order) and every bin
/// threshold, or `None` when no candidate reaches `min_gain` with both
/// children holding at least `min_samples_leaf` samples.
pub fn best_split(
    hist: &Histogram,
    node: &BinStats,
    features: &[usize],
    params: &SplitParams,
) -> Option<SplitCandidate> {
    let min_leaf = params.min_samples_leaf.max(1) as f64;
    if node.count < 2.0 * min_leaf {
        return None;
    }
    let mut sorted = features.to_vec();
    sorted.sort_unstable();
    let mut best: Option<SplitCandidate> = None;
    for f in sorted {
        let Some(bins) = hist.feature_bins(f) else { continue };
        let mut left = BinStats::default();
        for (t, bin) in bins.iter().enumerate().take(bins.len().saturating_sub(1)) {
            left.add(bin);
            let right = node.minus(&left);
            if left.count < min_leaf - 1e-9 || right.count < min_leaf - 1e-9 {
                continue;
            }
            let gain = params.objective.gain(node, &left, &right);
            if !gain.is_finite() {
                continue;
            }
            if best.is_none_or(|b| improves(gain, b.gain)) {
                best = Some(SplitCandidate {
                    feature: f,
                    threshold_bin: t as u8,
                    gain,
                    left,
                    right,
                });
            }
        }
    }
    best.filter(|b| b.gain >= params.min_gain)
}
