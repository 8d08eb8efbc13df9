//! Path-dependent TreeSHAP for the forest (probability of the short class)
//! and the booster (raw minutes), plus mean-|φ| feature rankings.
//!
//! Node covers from training act as the conditional distribution, so no
//! background dataset is needed. Traversal compares bin indices exactly as
//! prediction does.

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{ForestModel, GbdtModel};
use crate::tree::{BinMap, LeafValue, Node, Tree};

pub const DEFAULT_SAMPLE_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("SchemaMismatch: {0}")]
    SchemaMismatch(String),
    #[error("MissingCovers: tree {tree} node {node} has no positive cover")]
    MissingCovers { tree: usize, node: usize },
    #[error("EmptyInput: no rows to explain")]
    EmptyInput,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapVector {
    pub phi: Vec<f64>,
    /// Cover-weighted expected model output.
    pub base_value: f64,
    /// The model output being explained; `base_value + Σ phi` up to rounding.
    pub output: f64,
}

#[derive(Clone, Copy, Default)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

const NO_FEATURE: usize = usize::MAX;

fn extend_path(p: &mut [PathElement], depth: usize, zero: f64, one: f64, feature: usize) {
    p[depth] = PathElement {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        p[i + 1].pweight += one * p[i].pweight * (i + 1) as f64 / d1;
        p[i].pweight = zero * p[i].pweight * (depth - i) as f64 / d1;
    }
}

fn unwind_path(p: &mut [PathElement], depth: usize, index: usize) {
    let one = p[index].one_fraction;
    let zero = p[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next = p[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = p[i].pweight;
            p[i].pweight = next * d1 / ((i + 1) as f64 * one);
            next = tmp - p[i].pweight * zero * (depth - i) as f64 / d1;
        } else {
            p[i].pweight = p[i].pweight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        p[i].feature = p[i + 1].feature;
        p[i].zero_fraction = p[i + 1].zero_fraction;
        p[i].one_fraction = p[i + 1].one_fraction;
    }
}

fn unwound_path_sum(p: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = p[index].one_fraction;
    let zero = p[index].zero_fraction;
    let mut next = p[depth].pweight;
    let mut total = 0.0;
    if one != 0.0 {
        for i in (0..depth).rev() {
            let tmp = next / ((i + 1) as f64 * one);
            total += tmp;
            next = p[i].pweight - tmp * zero * (depth - i) as f64;
        }
    } else {
        for i in (0..depth).rev() {
            total += p[i].pweight / (zero * (depth - i) as f64);
        }
    }
    total * (depth + 1) as f64
}

/// One tree prepared for explanation: leaf outputs resolved to scalars.
struct Explained<'a> {
    tree: &'a Tree,
    leaf: Vec<f64>,
    depth: usize,
}

impl<'a> Explained<'a> {
    fn new(tree: &'a Tree, index: usize, leaf_output: impl Fn(&LeafValue, f64) -> f64) -> Result<Self, ExplainError> {
        let mut leaf = vec![0.0; tree.nodes.len()];
        for (i, node) in tree.nodes.iter().enumerate() {
            let cover = node.cover();
            if !(cover > 0.0 && cover.is_finite()) {
                return Err(ExplainError::MissingCovers { tree: index, node: i });
            }
            if let Node::Leaf { value, cover } = node {
                leaf[i] = leaf_output(value, *cover);
            }
        }
        Ok(Self { tree, leaf, depth: tree.depth() })
    }

    /// Cover-weighted mean leaf output.
    fn expected_value(&self) -> f64 {
        let root = self.tree.nodes[0].cover();
        self.tree
            .nodes
            .iter()
            .zip(&self.leaf)
            .filter(|(n, _)| matches!(n, Node::Leaf { .. }))
            .map(|(n, v)| n.cover() / root * v)
            .sum()
    }

    fn output(&self, bins: &[u8]) -> f64 {
        self.leaf[self.tree.leaf_index_binned(bins)]
    }

    /// Add this tree's attributions, times `scale`, into `phi`.
    fn shap(&self, bins: &[u8], scale: f64, phi: &mut [f64]) {
        let d = self.depth + 2;
        let mut buf = vec![PathElement::default(); d * (d + 1) / 2 + d];
        let mut local = vec![0.0; phi.len()];
        self.recurse(bins, &mut local, &mut buf, 0, 0, 0, 1.0, 1.0, NO_FEATURE);
        for (p, l) in phi.iter_mut().zip(local) {
            *p += scale * l;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        bins: &[u8],
        phi: &mut [f64],
        buf: &mut [PathElement],
        node: usize,
        parent: usize,
        depth: usize,
        zero: f64,
        one: f64,
        feature: usize,
    ) {
        let start = if node == 0 { 0 } else { parent + depth };
        if node != 0 {
            buf.copy_within(parent..parent + depth, start);
        }
        let mut depth = depth;
        extend_path(&mut buf[start..], depth, zero, one, feature);
        match &self.tree.nodes[node] {
            Node::Leaf { .. } => {
                let path = &buf[start..];
                for i in 1..=depth {
                    let w = unwound_path_sum(path, depth, i);
                    let el = path[i];
                    phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * self.leaf[node];
                }
            }
            Node::Split { feature: f, threshold_bin, left, right, cover, .. } => {
                let (hot, cold) = if bins[*f] <= *threshold_bin { (*left, *right) } else { (*right, *left) };
                let hot_zero = self.tree.nodes[hot].cover() / cover;
                let cold_zero = self.tree.nodes[cold].cover() / cover;
                let (mut in_zero, mut in_one) = (1.0, 1.0);
                if let Some(k) = (0..=depth).find(|&k| buf[start + k].feature == *f) {
                    in_zero = buf[start + k].zero_fraction;
                    in_one = buf[start + k].one_fraction;
                    unwind_path(&mut buf[start..], depth, k);
                    depth -= 1;
                }
                self.recurse(bins, phi, buf, hot, start, depth + 1, hot_zero * in_zero, in_one, *f);
                self.recurse(bins, phi, buf, cold, start, depth + 1, cold_zero * in_zero, 0.0, *f);
            }
        }
    }
}

fn bin_row(bins: &BinMap, row: &[f64]) -> Result<Vec<u8>, ExplainError> {
    if row.len() != bins.n_features() {
        return Err(ExplainError::SchemaMismatch(format!(
            "row has {} values, model expects {}",
            row.len(),
            bins.n_features()
        )));
    }
    Ok(row.iter().enumerate().map(|(f, &v)| bins.bin(f, v)).collect())
}

/// Path-dependent SHAP values of a single tree on bin indices; leaves must
/// hold scalars or class counts (explained as the class-1 share).
pub fn tree_shap(tree: &Tree, bins: &[u8], n_features: usize) -> Result<ShapVector, ExplainError> {
    let e = Explained::new(tree, 0, class_one_or_scalar)?;
    let mut phi = vec![0.0; n_features];
    e.shap(bins, 1.0, &mut phi);
    Ok(ShapVector { phi, base_value: e.expected_value(), output: e.output(bins) })
}

fn class_one_or_scalar(v: &LeafValue, cover: f64) -> f64 {
    match v {
        LeafValue::Scalar(x) => *x,
        LeafValue::Counts(c) => c.get(1).copied().unwrap_or(0.0) / cover,
    }
}

/// Models whose output TreeSHAP can attribute.
pub trait TreeExplainer: Sync {
    fn n_features(&self) -> usize;
    fn shap(&self, row: &[f64]) -> Result<ShapVector, ExplainError>;
    /// What the explained output means, for report headers.
    fn output_description(&self) -> &'static str;
}

impl TreeExplainer for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    /// Explains P(short), the mean over trees of the leaf class-1 share.
    fn shap(&self, row: &[f64]) -> Result<ShapVector, ExplainError> {
        let bins = bin_row(&self.bins, row)?;
        let k = self.trees.len() as f64;
        let mut phi = vec![0.0; self.n_features];
        let (mut base, mut output) = (0.0, 0.0);
        for (t, tree) in self.trees.iter().enumerate() {
            let e = Explained::new(tree, t, class_one_or_scalar)?;
            e.shap(&bins, 1.0 / k, &mut phi);
            base += e.expected_value();
            output += e.output(&bins);
        }
        Ok(ShapVector { phi, base_value: base / k, output: output / k })
    }

    fn output_description(&self) -> &'static str {
        "probability of the short-duration class"
    }
}

impl TreeExplainer for GbdtModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    /// Explains the unclipped prediction in minutes.
    fn shap(&self, row: &[f64]) -> Result<ShapVector, ExplainError> {
        let bins = bin_row(&self.bins, row)?;
        let lr = self.learning_rate;
        let mut phi = vec![0.0; self.n_features];
        let (mut base, mut sum) = (0.0, 0.0);
        for (t, tree) in self.trees.iter().enumerate() {
            let e = Explained::new(tree, t, class_one_or_scalar)?;
            e.shap(&bins, lr, &mut phi);
            base += e.expected_value();
            sum += e.output(&bins);
        }
        Ok(ShapVector {
            phi,
            base_value: self.base_score + lr * base,
            output: self.base_score + lr * sum,
        })
    }

    fn output_description(&self) -> &'static str {
        "predicted duration in minutes before clipping at zero"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_abs_shap: f64,
    /// 1 = most important.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub output: String,
    pub rows_used: usize,
    /// Sorted by rank.
    pub features: Vec<FeatureImportance>,
}

impl ShapSummary {
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.features.iter().find(|f| f.feature == feature).map(|f| f.rank)
    }
}

/// Row indices to explain: all of them, or `cap` drawn with `seed` and
/// returned in ascending order.
pub fn summary_rows(n_rows: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n_rows <= cap {
        return (0..n_rows).collect();
    }
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), n_rows, cap).into_vec();
    idx.sort_unstable();
    idx
}

/// Mean |φ| per feature over at most `sample_cap` rows of a row-major
/// matrix, ranked descending (ties keep schema order).
pub fn shap_summary<M: TreeExplainer + ?Sized>(
    model: &M,
    values: &[f64],
    names: &[String],
    sample_cap: usize,
    seed: u64,
) -> Result<ShapSummary, ExplainError> {
    let k = model.n_features();
    if names.len() != k || !values.len().is_multiple_of(k) {
        return Err(ExplainError::SchemaMismatch(format!(
            "{} names and {} values for {k} features",
            names.len(),
            values.len()
        )));
    }
    let n = values.len() / k;
    if n == 0 || sample_cap == 0 {
        return Err(ExplainError::EmptyInput);
    }
    let rows = summary_rows(n, sample_cap, seed);
    let per_row: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|&i| model.shap(&values[i * k..(i + 1) * k]).map(|s| s.phi))
        .collect::<Result<_, _>>()?;
    let mut mean = vec![0.0; k];
    for phi in &per_row {
        for (m, p) in mean.iter_mut().zip(phi) {
            *m += p.abs();
        }
    }
    for m in &mut mean {
        *m /= rows.len() as f64;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
    let features = order
        .iter()
        .enumerate()
        .map(|(r, &j)| FeatureImportance {
            feature: names[j].clone(),
            mean_abs_shap: mean[j],
            rank: r + 1,
        })
        .collect();
    Ok(ShapSummary {
        output: model.output_description().into(),
        rows_used: rows.len(),
        features,
    })
}

pub fn write_summary_csv<W: Write>(out: W, s: &ShapSummary) -> Result<(), ExplainError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "mean_abs_shap", "rank"])?;
    for f in &s.features {
        w.write_record([f.feature.clone(), f.mean_abs_shap.to_string(), f.rank.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_row_csv<W: Write>(out: W, names: &[String], s: &ShapVector) -> Result<(), ExplainError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "phi"])?;
    for (name, phi) in names.iter().zip(&s.phi) {
        w.write_record([name.clone(), phi.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_svg(title: &str, s: &ShapSummary) -> String {
    let items: Vec<(String, f64)> = s.features.iter().map(|f| (f.feature.clone(), f.mean_abs_shap)).collect();
    crate::report::svg::bar_chart(title, &items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{train_gbdt_matrix, GbdtParams};
    use crate::tree::{grow_tree, BinStats, BinnedMatrix, GrowParams, Growth, Objective};
    use proptest::prelude::*;

    /// E[f(x) | x_S] under the cover distribution.
    fn cond_expectation(t: &Tree, i: usize, bins: &[u8], set: u32) -> f64 {
        match &t.nodes[i] {
            Node::Leaf { value, cover } => class_one_or_scalar(value, *cover),
            Node::Split { feature, threshold_bin, left, right, cover, .. } => {
                if set & (1 << feature) != 0 {
                    let next = if bins[*feature] <= *threshold_bin { *left } else { *right };
                    cond_expectation(t, next, bins, set)
                } else {
                    let l = t.nodes[*left].cover() / cover;
                    let r = t.nodes[*right].cover() / cover;
                    l * cond_expectation(t, *left, bins, set) + r * cond_expectation(t, *right, bins, set)
                }
            }
        }
    }

    fn brute_shapley(t: &Tree, bins: &[u8], m: usize) -> Vec<f64> {
        let fact = |n: usize| (1..=n).map(|x| x as f64).product::<f64>();
        let mut phi = vec![0.0; m];
        for (j, p) in phi.iter_mut().enumerate() {
            for s in 0u32..(1 << m) {
                if s & (1 << j) != 0 {
                    continue;
                }
                let size = s.count_ones() as usize;
                let w = fact(size) * fact(m - size - 1) / fact(m);
                *p += w * (cond_expectation(t, 0, bins, s | (1 << j)) - cond_expectation(t, 0, bins, s));
            }
        }
        phi
    }

    fn random_tree(cols: &[Vec<u8>], y: &[f64], leaves: usize) -> (BinnedMatrix, Tree) {
        let data = BinnedMatrix::from_columns(cols.to_vec());
        let stats: Vec<BinStats> = y.iter().map(|v| BinStats::gradient(-v, 1.0)).collect();
        let samples: Vec<u32> = (0..y.len() as u32).collect();
        let params = GrowParams {
            objective: Objective::SquaredLoss { lambda_l2: 0.0 },
            growth: Growth::LeafWise,
            max_depth: None,
            max_leaves: Some(leaves),
            min_samples_leaf: 1,
            min_gain: 0.0,
            features_per_split: None,
        };
        let tree = grow_tree(&data, &samples, &stats, &params, None::<&mut ChaCha8Rng>);
        (data, tree)
    }

    #[test]
    fn single_leaf_has_no_attribution() {
        let t = Tree::leaf(LeafValue::Scalar(7.5), 10.0);
        let s = tree_shap(&t, &[0, 3], 2).unwrap();
        assert_eq!(s.phi, vec![0.0, 0.0]);
        assert_eq!(s.base_value, 7.5);
    }

    #[test]
    fn stump_attributes_everything_to_its_feature() {
        let t = Tree {
            nodes: vec![
                Node::Split { feature: 1, threshold_bin: 0, left: 1, right: 2, cover: 4.0, gain: 1.0 },
                Node::Leaf { value: LeafValue::Scalar(2.0), cover: 1.0 },
                Node::Leaf { value: LeafValue::Scalar(10.0), cover: 3.0 },
            ],
        };
        let s = tree_shap(&t, &[0, 0, 0], 3).unwrap();
        assert_eq!(s.base_value, 8.0);
        assert_eq!(s.phi, vec![0.0, -6.0, 0.0]);
    }

    #[test]
    fn zero_cover_is_reported() {
        let t = Tree::leaf(LeafValue::Scalar(1.0), 0.0);
        assert!(matches!(tree_shap(&t, &[0], 1), Err(ExplainError::MissingCovers { tree: 0, node: 0 })));
    }

    #[test]
    fn booster_is_lr_scaled_sum_of_trees() {
        let x: Vec<f64> = (0..120).flat_map(|i| [(i % 7) as f64, (i % 5) as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = (0..120).map(|i| ((i * 37) % 23) as f64 + (i % 7) as f64 * 3.0).collect();
        let params = GbdtParams { n_rounds: 6, learning_rate: 0.4, min_samples_leaf: 2, early_stopping_rounds: None, ..GbdtParams::default() };
        let (m, _) = train_gbdt_matrix(&x, 3, &y, &params, 0, "fp").unwrap();
        for i in 0..120 {
            let row = &x[i * 3..i * 3 + 3];
            let s = m.shap(row).unwrap();
            let bins: Vec<u8> = (0..3).map(|f| m.bins.bin(f, row[f])).collect();
            let mut sum = vec![0.0; 3];
            for t in &m.trees {
                let ts = tree_shap(t, &bins, 3).unwrap();
                for (a, b) in sum.iter_mut().zip(&ts.phi) {
                    *a += 0.4 * b;
                }
            }
            for (a, b) in s.phi.iter().zip(&sum) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            let total: f64 = s.base_value + s.phi.iter().sum::<f64>();
            assert!((total - m.predict_raw(row).unwrap()).abs() <= 1e-9 * (1.0 + total.abs()));
        }
    }

    #[test]
    fn summary_of_single_feature_model() {
        let t = Tree {
            nodes: vec![
                Node::Split { feature: 2, threshold_bin: 0, left: 1, right: 2, cover: 2.0, gain: 1.0 },
                Node::Leaf { value: LeafValue::Scalar(-1.0), cover: 1.0 },
                Node::Leaf { value: LeafValue::Scalar(1.0), cover: 1.0 },
            ],
        };
        let m = GbdtModel {
            format_version: 1,
            model_kind: "gbdt_regressor".into(),
            params: GbdtParams::default(),
            seed: 0,
            schema_fingerprint: "fp".into(),
            n_features: 3,
            base_score: 0.0,
            learning_rate: 1.0,
            bins: BinMap { edges: vec![vec![], vec![], vec![0.5]] },
            trees: vec![t],
        };
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let values = [0.0, 0.0, 0.0, 5.0, 5.0, 1.0];
        let s = shap_summary(&m, &values, &names, 10, 0).unwrap();
        assert_eq!(s.features[0].feature, "c");
        assert_eq!(s.features[0].mean_abs_shap, 1.0);
        assert_eq!(s.rank_of("a"), Some(2));
        assert_eq!(s.features[2].mean_abs_shap, 0.0);
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &s).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("feature,mean_abs_shap,rank\nc,1,1\n"));
    }

    #[test]
    fn capped_rows_are_deterministic() {
        assert_eq!(summary_rows(5, 10, 1), vec![0, 1, 2, 3, 4]);
        let a = summary_rows(1000, 50, 7);
        assert_eq!(a.len(), 50);
        assert_eq!(a, summary_rows(1000, 50, 7));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(150))]

        #[test]
        fn matches_exhaustive_shapley(
            rows in prop::collection::vec((0u8..4, 0u8..3, 0u8..4, 0u8..2, -20.0f64..20.0), 2..40),
            m in 1usize..=4,
            leaves in 2usize..8,
            probe in prop::collection::vec(0u8..4, 4),
        ) {
            let full: Vec<Vec<u8>> = vec![
                rows.iter().map(|r| r.0).collect(),
                rows.iter().map(|r| r.1).collect(),
                rows.iter().map(|r| r.2).collect(),
                rows.iter().map(|r| r.3).collect(),
            ];
            let cols = &full[..m];
            let y: Vec<f64> = rows.iter().map(|r| r.4).collect();
            let (data, tree) = random_tree(cols, &y, leaves);
            let bins: Vec<u8> = (0..m).map(|f| probe[f].min((data.n_bins[f] - 1) as u8)).collect();
            let s = tree_shap(&tree, &bins, m).unwrap();
            let want = brute_shapley(&tree, &bins, m);
            for (a, b) in s.phi.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-9, "{:?} vs {:?}", s.phi, want);
            }
            let total = s.base_value + s.phi.iter().sum::<f64>();
            prop_assert!((total - s.output).abs() <= 1e-9 * (1.0 + s.output.abs()));
            for f in 0..m {
                if !tree.used_features().contains(&f) {
                    prop_assert_eq!(s.phi[f], 0.0);
                }
            }
        }
    }
}
