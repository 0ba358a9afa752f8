use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::agglo::{cut_tree, linkage_tree, Linkage};
use super::{sq_dist, Algorithm, ClusterError, ClusteringResult, Detail};

/// Clustering feature: count, linear sum and squared-norm sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cf {
    pub n: f64,
    pub ls: Vec<f64>,
    pub ss: f64,
}

impl Cf {
    fn point(x: &[f64]) -> Self {
        Cf {
            n: 1.0,
            ls: x.to_vec(),
            ss: x.iter().map(|v| v * v).sum(),
        }
    }

    fn zero(dim: usize) -> Self {
        Cf {
            n: 0.0,
            ls: vec![0.0; dim],
            ss: 0.0,
        }
    }

    fn add(&mut self, other: &Cf) {
        self.n += other.n;
        for (a, b) in self.ls.iter_mut().zip(&other.ls) {
            *a += b;
        }
        self.ss += other.ss;
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.ls.iter().map(|v| v / self.n).collect()
    }

    /// Root-mean-square distance of members to the centroid.
    pub fn radius(&self) -> f64 {
        let c2: f64 = self.ls.iter().map(|v| (v / self.n).powi(2)).sum();
        (self.ss / self.n - c2).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone)]
struct Entry {
    cf: Cf,
    child: Option<usize>,
}

#[derive(Debug, Clone)]
struct Node {
    leaf: bool,
    entries: Vec<Entry>,
}

/// CF-tree built in one pass over the data.
#[derive(Debug, Clone)]
pub struct CfTree {
    threshold: f64,
    branching: usize,
    nodes: Vec<Node>,
    root: usize,
    dim: usize,
}

fn closest(entries: &[Entry], x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries.iter().enumerate() {
        let d = sq_dist(&e.cf.centroid(), x);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|b| b.0)
}

impl CfTree {
    pub fn new(dim: usize, threshold: f64, branching: usize) -> Result<Self, ClusterError> {
        if !(threshold > 0.0) || branching < 2 {
            return Err(ClusterError::InvalidParams(
                "BIRCH needs threshold > 0 and branching factor ≥ 2".into(),
            ));
        }
        Ok(CfTree {
            threshold,
            branching,
            nodes: vec![Node {
                leaf: true,
                entries: Vec::new(),
            }],
            root: 0,
            dim,
        })
    }

    pub fn insert(&mut self, x: &[f64]) {
        let point = Cf::point(x);
        if let Some((a, b)) = self.insert_at(self.root, &point) {
            self.nodes.push(Node {
                leaf: false,
                entries: vec![a, b],
            });
            self.root = self.nodes.len() - 1;
        }
    }

    fn insert_at(&mut self, node: usize, point: &Cf) -> Option<(Entry, Entry)> {
        let x = &point.ls;
        if self.nodes[node].leaf {
            let entries = &mut self.nodes[node].entries;
            if let Some(j) = closest(entries, x) {
                let mut merged = entries[j].cf.clone();
                merged.add(point);
                if merged.radius() <= self.threshold {
                    entries[j].cf = merged;
                    return None;
                }
            }
            entries.push(Entry {
                cf: point.clone(),
                child: None,
            });
        } else {
            let j = closest(&self.nodes[node].entries, x).expect("internal nodes are never empty");
            let child = self.nodes[node].entries[j].child.unwrap();
            match self.insert_at(child, point) {
                None => self.nodes[node].entries[j].cf.add(point),
                Some((a, b)) => {
                    let entries = &mut self.nodes[node].entries;
                    entries[j] = a;
                    entries.insert(j + 1, b);
                }
            }
        }
        (self.nodes[node].entries.len() > self.branching).then(|| self.split(node))
    }

    /// Splits around the farthest pair of entries; `node` keeps the first group.
    fn split(&mut self, node: usize) -> (Entry, Entry) {
        let entries = std::mem::take(&mut self.nodes[node].entries);
        let cents: Vec<Vec<f64>> = entries.iter().map(|e| e.cf.centroid()).collect();
        let (mut s1, mut s2, mut far) = (0, 1, -1.0);
        for i in 0..cents.len() {
            for j in i + 1..cents.len() {
                let d = sq_dist(&cents[i], &cents[j]);
                if d > far {
                    (s1, s2, far) = (i, j, d);
                }
            }
        }
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (i, e) in entries.into_iter().enumerate() {
            let to_first = i == s1 || (i != s2 && sq_dist(&cents[i], &cents[s1]) <= sq_dist(&cents[i], &cents[s2]));
            if to_first {
                first.push(e);
            } else {
                second.push(e);
            }
        }
        let leaf = self.nodes[node].leaf;
        let summary = |es: &[Entry], dim| {
            let mut cf = Cf::zero(dim);
            for e in es {
                cf.add(&e.cf);
            }
            cf
        };
        let cf1 = summary(&first, self.dim);
        let cf2 = summary(&second, self.dim);
        self.nodes[node].entries = first;
        self.nodes.push(Node { leaf, entries: second });
        let other = self.nodes.len() - 1;
        (
            Entry {
                cf: cf1,
                child: Some(node),
            },
            Entry {
                cf: cf2,
                child: Some(other),
            },
        )
    }

    /// Leaf sub-clusters in tree order.
    pub fn leaf_entries(&self) -> Vec<Cf> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if node.leaf {
                out.extend(node.entries.iter().map(|e| e.cf.clone()));
            } else {
                stack.extend(node.entries.iter().rev().map(|e| e.child.unwrap()));
            }
        }
        out
    }
}

/// BIRCH: one-pass CF-tree, then weighted Ward clustering of the leaf
/// sub-cluster centroids down to `k` groups; points go to the nearest
/// resulting centroid.
pub fn birch(
    data: &Array2<f64>,
    threshold: f64,
    branching_factor: usize,
    k: usize,
) -> Result<ClusteringResult, ClusterError> {
    let n = data.nrows();
    let mut tree = CfTree::new(data.ncols(), threshold, branching_factor)?;
    let data = data.as_standard_layout();
    for row in data.rows() {
        tree.insert(row.as_slice().unwrap());
    }
    let leaves = tree.leaf_entries();
    if k == 0 || k > leaves.len() {
        return Err(ClusterError::KTooLarge {
            k,
            n: leaves.len().min(n),
        });
    }
    let dim = data.ncols();
    let cents = Array2::from_shape_fn((leaves.len(), dim), |(i, j)| leaves[i].ls[j] / leaves[i].n);
    let weights: Vec<f64> = leaves.iter().map(|c| c.n).collect();
    let merges = linkage_tree(&cents, &weights, Linkage::Ward);
    let groups = cut_tree(leaves.len(), &merges, k);

    let mut sums = vec![Cf::zero(dim); k];
    for (cf, &g) in leaves.iter().zip(&groups) {
        sums[g].add(cf);
    }
    let centroids = Array2::from_shape_fn((k, dim), |(g, j)| sums[g].ls[j] / sums[g].n);
    let assignment: Vec<i32> = data
        .rows()
        .into_iter()
        .map(|r| {
            let x = r.as_slice().unwrap();
            let mut best = (0, f64::INFINITY);
            for (g, c) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(x, c.as_slice().unwrap());
                if d < best.1 {
                    best = (g, d);
                }
            }
            best.0 as i32
        })
        .collect();
    Ok(ClusteringResult {
        algorithm: Algorithm::Birch,
        k,
        assignment,
        centroids: Some(centroids),
        seed: None,
        warnings: Vec::new(),
        detail: Detail::Birch {
            threshold,
            branching_factor,
            n_leaf_entries: leaves.len(),
        },
    })
}
