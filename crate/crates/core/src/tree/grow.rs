use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bins::BinnedMatrix;
use super::split::{best_split, BinStats, Histogram, Objective, SplitCandidate, SplitParams};
use super::{LeafValue, Node, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// Expand the highest-gain leaf first.
    LeafWise,
    /// Expand breadth-first, bounded by depth.
    DepthWise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowParams {
    pub objective: Objective,
    pub growth: Growth,
    pub max_depth: Option<usize>,
    pub max_leaves: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_gain: f64,
    /// Features drawn per split; `None` uses all of them.
    pub features_per_split: Option<usize>,
}

impl GrowParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_samples_leaf < 1 {
            return Err("min_samples_leaf must be >= 1".into());
        }
        if matches!(self.max_leaves, Some(k) if k < 2) {
            return Err("max_leaves must be >= 2".into());
        }
        if self.features_per_split == Some(0) {
            return Err("features_per_split must be >= 1".into());
        }
        if let Objective::SquaredLoss { lambda_l2 } = self.objective {
            if lambda_l2.is_nan() || lambda_l2 < 0.0 {
                return Err("lambda_l2 must be >= 0".into());
            }
        }
        Ok(())
    }

    fn split_params(&self) -> SplitParams {
        SplitParams {
            objective: self.objective,
            min_samples_leaf: self.min_samples_leaf,
            min_gain: self.min_gain,
        }
    }
}

fn leaf_value(objective: &Objective, total: &BinStats) -> LeafValue {
    match *objective {
        Objective::Gini => LeafValue::Counts(total.sum.to_vec()),
        Objective::SquaredLoss { lambda_l2 } => {
            let denom = total.sum[1] + lambda_l2;
            LeafValue::Scalar(if denom > 0.0 { -total.sum[0] / denom } else { 0.0 })
        }
    }
}

fn totals(samples: &[u32], stats: &[BinStats]) -> BinStats {
    let mut t = BinStats::default();
    for &i in samples {
        t.add(&stats[i as usize]);
    }
    t
}

/// Stable partition by the split predicate `bin <= threshold`.
fn partition(data: &BinnedMatrix, samples: &[u32], split: &SplitCandidate) -> (Vec<u32>, Vec<u32>) {
    let col = data.column(split.feature);
    samples
        .iter()
        .partition(|&&i| col[i as usize] <= split.threshold_bin)
}

fn pick_features<R: Rng>(n_features: usize, per_split: Option<usize>, rng: &mut Option<&mut R>) -> Vec<usize> {
    match (per_split, rng.as_deref_mut()) {
        (Some(k), Some(rng)) if k < n_features => {
            let mut f = sample(rng, n_features, k).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..n_features).collect(),
    }
}

struct Candidate {
    node: usize,
    depth: usize,
    samples: Vec<u32>,
    hist: Histogram,
    split: SplitCandidate,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // max-heap on gain; equal gains pop the lower node index first
    fn cmp(&self, other: &Self) -> Ordering {
        self.split
            .gain
            .total_cmp(&other.split.gain)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Grow one tree over `samples` (row indices into `data`, each listed once;
/// multiplicity is carried in `sample_stats[i].count`).
///
/// `rng` is only consulted when `features_per_split` is set.
pub fn grow_tree<R: Rng>(
    data: &BinnedMatrix,
    samples: &[u32],
    sample_stats: &[BinStats],
    params: &GrowParams,
    mut rng: Option<&mut R>,
) -> Tree {
    let split_params = params.split_params();
    let n_features = data.n_features();
    let depth_ok = |d: usize| params.max_depth.is_none_or(|m| d < m);
    let root_total = totals(samples, sample_stats);
    let mut nodes = vec![Node::Leaf {
        value: leaf_value(&params.objective, &root_total),
        cover: root_total.count,
    }];
    if samples.is_empty() {
        return Tree { nodes };
    }

    let make_split = |nodes: &mut Vec<Node>, at: usize, split: &SplitCandidate| -> (usize, usize) {
        let left = nodes.len();
        let right = left + 1;
        let cover = split.left.count + split.right.count;
        nodes[at] = Node::Split {
            feature: split.feature,
            threshold_bin: split.threshold_bin,
            left,
            right,
            cover,
            gain: split.gain,
        };
        nodes.push(Node::Leaf {
            value: leaf_value(&params.objective, &split.left),
            cover: split.left.count,
        });
        nodes.push(Node::Leaf {
            value: leaf_value(&params.objective, &split.right),
            cover: split.right.count,
        });
        (left, right)
    };

    match params.growth {
        Growth::LeafWise => {
            let all_features: Vec<usize> = (0..n_features).collect();
            let mut heap = BinaryHeap::new();
            let mut n_leaves = 1usize;
            let consider = |heap: &mut BinaryHeap<Candidate>,
                                rng: &mut Option<&mut R>,
                                node: usize,
                                depth: usize,
                                samples: Vec<u32>,
                                hist: Histogram,
                                total: &BinStats| {
                if !depth_ok(depth) {
                    return;
                }
                let features = pick_features(n_features, params.features_per_split, rng);
                if let Some(split) = best_split(&hist, total, &features, &split_params) {
                    heap.push(Candidate { node, depth, samples, hist, split });
                }
            };
            let hist = Histogram::build(data, samples, sample_stats, &all_features);
            consider(&mut heap, &mut rng, 0, 0, samples.to_vec(), hist, &root_total);
            while let Some(c) = heap.pop() {
                if params.max_leaves.is_some_and(|m| n_leaves >= m) {
                    break;
                }
                let (left, right) = make_split(&mut nodes, c.node, &c.split);
                n_leaves += 1;
                let (ls, rs) = partition(data, &c.samples, &c.split);
                let (lh, rh) = if ls.len() <= rs.len() {
                    let lh = Histogram::build(data, &ls, sample_stats, &all_features);
                    let rh = c.hist.subtract(&lh);
                    (lh, rh)
                } else {
                    let rh = Histogram::build(data, &rs, sample_stats, &all_features);
                    let lh = c.hist.subtract(&rh);
                    (lh, rh)
                };
                let (lt, rt) = (c.split.left, c.split.right);
                consider(&mut heap, &mut rng, left, c.depth + 1, ls, lh, &lt);
                consider(&mut heap, &mut rng, right, c.depth + 1, rs, rh, &rt);
            }
        }
        Growth::DepthWise => {
            let mut queue = VecDeque::new();
            queue.push_back((0usize, 0usize, samples.to_vec(), root_total));
            let mut n_leaves = 1usize;
            while let Some((node, depth, samples, total)) = queue.pop_front() {
                if !depth_ok(depth) || params.max_leaves.is_some_and(|m| n_leaves >= m) {
                    continue;
                }
                let features = pick_features(n_features, params.features_per_split, &mut rng);
                let hist = Histogram::build(data, &samples, sample_stats, &features);
                let Some(split) = best_split(&hist, &total, &features, &split_params) else {
                    continue;
                };
                let (left, right) = make_split(&mut nodes, node, &split);
                n_leaves += 1;
                let (ls, rs) = partition(data, &samples, &split);
                queue.push_back((left, depth + 1, ls, split.left));
                queue.push_back((right, depth + 1, rs, split.right));
            }
        }
    }
    Tree { nodes }
}
