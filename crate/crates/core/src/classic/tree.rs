use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClassicError;
use crate::corpus::FeatureMatrix;
use crate::rng::{child_seed, seeded, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Weighted (benign, malware) counts of the training rows reaching it.
    Leaf { counts: [f64; 2] },
}

pub(crate) fn gini(counts: [f64; 2]) -> f64 {
    let total = counts[0] + counts[1];
    if total <= 0.0 {
        return 0.0;
    }
    let p = counts[1] / total;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Best cut found on one feature.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cut {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted child impurity, `w_l·gini_l + w_r·gini_r`.
    pub cost: f64,
    pub left: [f64; 2],
    pub right: [f64; 2],
}

/// Scans `(value, malware, weight)` triples sorted by value and returns the
/// lowest-cost midpoint cut. Ties keep the lower threshold. `None` when
/// the feature is constant over the triples.
pub(crate) fn scan_sorted(feature: usize, sorted: &[(f64, bool, f64)], total: [f64; 2]) -> Option<Cut> {
    let mut left = [0.0; 2];
    let mut best: Option<Cut> = None;
    for k in 0..sorted.len().saturating_sub(1) {
        let (v, y, w) = sorted[k];
        left[y as usize] += w;
        let next = sorted[k + 1].0;
        if next <= v {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let cost = (left[0] + left[1]) * gini(left) + (right[0] + right[1]) * gini(right);
        if best.is_none_or(|b| cost < b.cost) {
            let mut threshold = v + (next - v) / 2.0;
            if threshold >= next {
                threshold = v;
            }
            best = Some(Cut {
                feature,
                threshold,
                cost,
                left,
                right,
            });
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root at index 0.
    pub nodes: Vec<TreeNode>,
    pub n_features: usize,
}

impl DecisionTree {
    /// Malware fraction of the leaf `row` lands in.
    pub fn score(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { counts } => return counts[1] / (counts[0] + counts[1]),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

/// Grows an unrestricted Gini tree. `weights[i]` is the multiplicity of row
/// `i` (bootstrap counts; zero drops the row). With `max_features`, each
/// split examines a random subset of that many non-constant features.
pub(crate) fn grow_tree(
    data: &Array2<f64>,
    y: &[bool],
    weights: &[f64],
    max_features: Option<usize>,
    rng: &mut Rng,
) -> DecisionTree {
    let d = data.ncols();
    let rows: Vec<usize> = (0..data.nrows()).filter(|&i| weights[i] > 0.0).collect();
    let mut nodes = vec![TreeNode::Leaf { counts: [0.0; 2] }];
    let mut stack = vec![(0usize, rows)];
    let mut features: Vec<usize> = (0..d).collect();
    let mut triples = Vec::new();

    while let Some((slot, rows)) = stack.pop() {
        let mut counts = [0.0; 2];
        for &i in &rows {
            counts[y[i] as usize] += weights[i];
        }
        nodes[slot] = TreeNode::Leaf { counts };
        if rows.len() < 2 || counts[0] == 0.0 || counts[1] == 0.0 {
            continue;
        }

        let budget = max_features.unwrap_or(d).min(d);
        if max_features.is_some() {
            features.shuffle(rng);
        } else {
            features.sort_unstable();
        }
        let mut best: Option<Cut> = None;
        let mut visited = 0;
        for &f in &features {
            if visited >= budget {
                break;
            }
            triples.clear();
            triples.extend(rows.iter().map(|&i| (data[[i, f]], y[i], weights[i])));
            triples.sort_by(|a, b| a.0.total_cmp(&b.0));
            // constant features do not use up the budget
            if triples[0].0 == triples[triples.len() - 1].0 {
                continue;
            }
            visited += 1;
            if let Some(cut) = scan_sorted(f, &triples, counts) {
                let better = match best {
                    None => true,
                    Some(b) => cut.cost < b.cost || (cut.cost == b.cost && f < b.feature),
                };
                if better {
                    best = Some(cut);
                }
            }
        }
        let Some(cut) = best else { continue };

        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| data[[i, cut.feature]] <= cut.threshold);
        let left = nodes.len();
        nodes.push(TreeNode::Leaf { counts: cut.left });
        let right = nodes.len();
        nodes.push(TreeNode::Leaf { counts: cut.right });
        nodes[slot] = TreeNode::Split {
            feature: cut.feature,
            threshold: cut.threshold,
            left,
            right,
        };
        stack.push((right, r_rows));
        stack.push((left, l_rows));
    }
    DecisionTree { nodes, n_features: d }
}

pub fn train_dt(train: &FeatureMatrix) -> Result<DecisionTree, ClassicError> {
    if train.n_rows() == 0 {
        return Err(ClassicError::TooFewRows { needed: 1, got: 0 });
    }
    let weights = vec![1.0; train.n_rows()];
    let mut unused = seeded(0);
    Ok(grow_tree(&train.data, &train.targets(), &weights, None, &mut unused))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(seed: u64) -> Self {
        ForestParams {
            n_trees: 100,
            bootstrap: true,
            max_features: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Mean of the tree scores.
    pub fn score(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.score(row)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn train_rf(train: &FeatureMatrix, params: ForestParams) -> Result<RandomForest, ClassicError> {
    let n = train.n_rows();
    if n < 2 {
        return Err(ClassicError::TooFewRows { needed: 2, got: n });
    }
    if params.n_trees == 0 {
        return Err(ClassicError::InvalidParams("forest needs at least one tree".into()));
    }
    let d = train.n_features();
    let max_features = params
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let y = train.targets();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded(child_seed(params.seed, t as u64));
            let mut weights = vec![0.0; n];
            if params.bootstrap {
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weights.fill(1.0);
            }
            let subset = (max_features < d).then_some(max_features);
            grow_tree(&train.data, &y, &weights, subset, &mut rng)
        })
        .collect();
    Ok(RandomForest { params, trees })
}
