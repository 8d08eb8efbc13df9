//! Histogram-binned CART trees shared by the forest (Gini) and the booster
//! (second-order squared loss).
//!
//! Trees are flat node arrays. Node 0 is the root and every child index is
//! larger than its parent's. Splits compare bin indices, never raw values:
//! a row goes left iff `bin(row[feature]) <= threshold_bin`.

mod bins;
mod grow;
mod split;

use std::fmt::Write;

use serde::{Deserialize, Serialize};

pub use bins::{build_bins, BinMap, BinnedMatrix, DEFAULT_MAX_BINS, MAX_SUPPORTED_BINS};
pub use grow::{grow_tree, GrowParams, Growth};
pub use split::{best_split, improves, BinStats, Histogram, Objective, SplitCandidate, SplitParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LeafValue {
    /// Regression output.
    Scalar(f64),
    /// Per-class (bootstrap-weighted) sample counts.
    Counts(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold_bin: u8,
        left: usize,
        right: usize,
        cover: f64,
        gain: f64,
    },
    Leaf {
        value: LeafValue,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: LeafValue, cover: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    /// Index of the leaf reached by a row of bin indices.
    pub fn leaf_index_binned(&self, bins: &[u8]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold_bin, left, right, .. } => {
                    i = if bins[*feature] <= *threshold_bin { *left } else { *right };
                }
            }
        }
    }

    /// Index of the leaf reached by row `row` of a binned matrix.
    pub fn leaf_index_at(&self, data: &BinnedMatrix, row: usize) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold_bin, left, right, .. } => {
                    i = if data.get(row, *feature) <= *threshold_bin { *left } else { *right };
                }
            }
        }
    }

    /// Scalar value of leaf `i`; 0 for class-count leaves.
    pub fn scalar_at(&self, i: usize) -> f64 {
        match &self.nodes[i] {
            Node::Leaf { value: LeafValue::Scalar(v), .. } => *v,
            _ => 0.0,
        }
    }

    /// Index of the leaf reached by a raw row, binning lazily with `map`.
    pub fn leaf_index(&self, row: &[f64], map: &BinMap) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold_bin, left, right, .. } => {
                    i = if map.bin(*feature, row[*feature]) <= *threshold_bin {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64], map: &BinMap) -> &LeafValue {
        match &self.nodes[self.leaf_index(row, map)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Structural checks: one root, children after parents, every node
    /// reachable exactly once, covers additive, leaf counts summing to cover.
    pub fn validate(&self, n_features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let cover = node.cover();
            if !(cover.is_finite() && cover >= 0.0) {
                return Err(format!("node {i} has invalid cover {cover}"));
            }
            match node {
                Node::Split { feature, left, right, .. } => {
                    if *feature >= n_features {
                        return Err(format!("node {i} splits on unknown feature {feature}"));
                    }
                    for &c in [left, right] {
                        if c <= i || c >= self.nodes.len() {
                            return Err(format!("node {i} has bad child index {c}"));
                        }
                        parents[c] += 1;
                    }
                    let sum = self.nodes[*left].cover() + self.nodes[*right].cover();
                    if (sum - cover).abs() > 1e-9 * cover.max(1.0) {
                        return Err(format!("node {i} cover {cover} != children {sum}"));
                    }
                }
                Node::Leaf { value, cover } => match value {
                    LeafValue::Scalar(v) if !v.is_finite() => {
                        return Err(format!("leaf {i} has non-finite value"))
                    }
                    LeafValue::Counts(c) => {
                        if c.iter().any(|x| x.is_nan() || *x < 0.0) {
                            return Err(format!("leaf {i} has negative counts"));
                        }
                        let s: f64 = c.iter().sum();
                        if (s - cover).abs() > 1e-9 * cover.max(1.0) {
                            return Err(format!("leaf {i} counts sum {s} != cover {cover}"));
                        }
                    }
                    LeafValue::Scalar(_) => {}
                },
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err("node graph is not a single rooted tree".into());
        }
        Ok(())
    }

    /// Graphviz DOT text, one statement per line. Splits are labelled with
    /// the raw-value threshold `feature <= edge`.
    pub fn to_dot(&self, feature_names: &[String], map: &BinMap, max_depth: Option<usize>) -> String {
        let mut s = String::from("digraph tree {\n  node [shape=box, fontname=\"sans-serif\"];\n");
        let mut stack = vec![(0usize, 0usize)];
        let mut order = Vec::new();
        while let Some((i, d)) = stack.pop() {
            order.push((i, d));
            if let Node::Split { left, right, .. } = &self.nodes[i] {
                if max_depth.is_none_or(|m| d < m) {
                    stack.push((*right, d + 1));
                    stack.push((*left, d + 1));
                }
            }
        }
        for &(i, d) in &order {
            let truncated = max_depth.is_some_and(|m| d >= m);
            let label = match &self.nodes[i] {
                Node::Split { feature, threshold_bin, cover, .. } => {
                    let name = feature_names
                        .get(*feature)
                        .cloned()
                        .unwrap_or_else(|| format!("f{feature}"));
                    let edge = map.threshold_value(*feature, *threshold_bin);
                    if truncated {
                        format!("{name} <= {edge:.4}\\ncover {cover}\\n...")
                    } else {
                        format!("{name} <= {edge:.4}\\ncover {cover}")
                    }
                }
                Node::Leaf { value, cover } => match value {
                    LeafValue::Scalar(v) => format!("value {v:.4}\\ncover {cover}"),
                    LeafValue::Counts(c) => {
                        let counts: Vec<String> = c.iter().map(|x| format!("{x}")).collect();
                        format!("counts [{}]\\ncover {cover}", counts.join(", "))
                    }
                },
            };
            let _ = writeln!(s, "  n{i} [label=\"{}\"];", label.replace('"', "\\\""));
        }
        for &(i, d) in &order {
            if let Node::Split { left, right, .. } = &self.nodes[i] {
                if max_depth.is_none_or(|m| d < m) {
                    let _ = writeln!(s, "  n{i} -> n{left} [label=\"yes\"];");
                    let _ = writeln!(s, "  n{i} -> n{right} [label=\"no\"];");
                }
            }
        }
        s.push_str("}\n");
        s
    }
}
