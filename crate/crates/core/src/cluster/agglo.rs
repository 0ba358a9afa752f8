use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::metrics::cluster_means;
use super::{sq_dist, Algorithm, ClusterError, ClusteringResult, Detail};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Ward,
    Single,
    Complete,
    Average,
}

impl std::str::FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ward" => Ok(Linkage::Ward),
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            _ => Err(format!("unknown linkage {s:?}")),
        }
    }
}

/// One dendrogram step. Ids below N are points; step `s` creates id `N + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub step: usize,
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub distance: f64,
    pub size: usize,
}

/// Upper-triangle distance store.
struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.n * i - i * (i + 1) / 2 + j - i - 1
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

/// Full merge sequence, sorted by distance.
///
/// Points may carry weights (sizes), which lets BIRCH hand over its leaf
/// sub-clusters. Uses the nearest-neighbour chain, valid for all four
/// linkages. Ward heights follow the usual convention where two singletons
/// merge at their Euclidean distance.
pub fn linkage_tree(points: &Array2<f64>, weights: &[f64], linkage: Linkage) -> Vec<Merge> {
    let n = points.nrows();
    if n < 2 {
        return Vec::new();
    }
    let points = points.as_standard_layout();
    let flat = points.as_slice().unwrap();
    let dim = points.ncols().max(1);
    let row = |i: usize| &flat[i * dim..(i + 1) * dim];

    // Ward works on squared heights internally.
    let mut dist = Condensed {
        n,
        d: vec![0.0; n * (n - 1) / 2],
    };
    for i in 0..n {
        for j in i + 1..n {
            let sq = sq_dist(row(i), row(j));
            let v = match linkage {
                Linkage::Ward => 2.0 * weights[i] * weights[j] / (weights[i] + weights[j]) * sq,
                _ => sq.sqrt(),
            };
            dist.set(i, j, v);
        }
    }

    let mut size: Vec<f64> = weights.to_vec();
    let mut active = vec![true; n];
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);

    for _ in 0..n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).unwrap());
        }
        let (x, y, h) = loop {
            let a = *chain.last().unwrap();
            let prev = (chain.len() >= 2).then(|| chain[chain.len() - 2]);
            // stay with the predecessor on ties so the chain terminates
            let mut best = prev.map(|p| (p, dist.get(a, p)));
            for c in (0..n).filter(|&c| active[c] && c != a) {
                let v = dist.get(a, c);
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((c, v));
                }
            }
            let (b, v) = best.unwrap();
            if Some(b) == prev {
                chain.pop();
                chain.pop();
                break (a, b, v);
            }
            chain.push(b);
        };

        // merged cluster lives in slot y
        let (nx, ny) = (size[x], size[y]);
        for c in (0..n).filter(|&c| active[c] && c != x && c != y) {
            let (dx, dy) = (dist.get(x, c), dist.get(y, c));
            let nc = size[c];
            let v = match linkage {
                Linkage::Single => dx.min(dy),
                Linkage::Complete => dx.max(dy),
                Linkage::Average => (nx * dx + ny * dy) / (nx + ny),
                Linkage::Ward => ((nx + nc) * dx + (ny + nc) * dy - nc * h) / (nx + ny + nc),
            };
            dist.set(y, c, v);
        }
        active[x] = false;
        size[y] = nx + ny;
        let height = match linkage {
            Linkage::Ward => h.max(0.0).sqrt(),
            _ => h,
        };
        raw.push((x, y, height));
    }

    // replay in height order with union-find to name the clusters
    raw.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut label: Vec<usize> = (0..n).collect();
    let mut members: Vec<usize> = vec![1; n];
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    raw.iter()
        .enumerate()
        .map(|(step, &(x, y, height))| {
            let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
            let (a, b) = (label[rx].min(label[ry]), label[rx].max(label[ry]));
            parent[rx] = ry;
            members[ry] += members[rx];
            label[ry] = n + step;
            Merge {
                step,
                cluster_a: a,
                cluster_b: b,
                distance: height,
                size: members[ry],
            }
        })
        .collect()
}

/// Flat labels after applying the first `n − k` merges. Clusters are
/// numbered by their lowest point index.
pub fn cut_tree(n: usize, merges: &[Merge], k: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..2 * n).collect();
    for m in merges.iter().take(n.saturating_sub(k)) {
        parent[m.cluster_a] = n + m.step;
        parent[m.cluster_b] = n + m.step;
    }
    let root = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    let roots: Vec<usize> = (0..n).map(root).collect();
    let mut ids = std::collections::HashMap::new();
    roots
        .iter()
        .map(|r| {
            let next = ids.len();
            *ids.entry(*r).or_insert(next)
        })
        .collect()
}

/// Bottom-up clustering cut at `k` clusters.
pub fn agglomerative(data: &Array2<f64>, k: usize, linkage: Linkage) -> Result<ClusteringResult, ClusterError> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    let merges = linkage_tree(data, &vec![1.0; n], linkage);
    let assignment = cut_tree(n, &merges, k);
    let centroids = cluster_means(data, &assignment, k);
    Ok(ClusteringResult {
        algorithm: Algorithm::Agglomerative,
        k,
        assignment: assignment.iter().map(|&c| c as i32).collect(),
        centroids: Some(centroids),
        seed: None,
        warnings: Vec::new(),
        detail: Detail::Agglomerative { linkage, merges },
    })
}
