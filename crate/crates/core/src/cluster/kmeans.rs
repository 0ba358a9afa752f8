use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;

use super::metrics::cluster_means;
use super::{sq_dist, Algorithm, ClusterError, ClusteringResult, Detail};
use crate::rng::{child_seed, seeded, Rng};

pub const DEFAULT_MAX_ITER: usize = 300;
pub const ELBOW_RESTARTS: usize = 5;

/// Index of the nearest centroid (lowest index on ties) and the squared
/// distance to it.
fn nearest(x: &[f64], centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, row.as_slice().unwrap());
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(flat: &[f64], n: usize, dim: usize, k: usize, rng: &mut Rng) -> Array2<f64> {
    let row = |i: usize| &flat[i * dim..(i + 1) * dim];
    let mut centroids = Array2::zeros((k, dim));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&ndarray::ArrayView1::from(row(first)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // all remaining mass is on existing centres
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&ndarray::ArrayView1::from(row(pick)));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), row(pick)));
        }
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeds. Stops at an assignment fixpoint
/// or after `max_iter` passes. A cluster that empties is re-seeded at the
/// point farthest from its current centroid.
pub fn kmeans(data: &Array2<f64>, k: usize, seed: u64, max_iter: usize) -> Result<ClusteringResult, ClusterError> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    let data = data.as_standard_layout();
    let dim = data.ncols();
    let flat = data.as_slice().unwrap();
    let mut rng = seeded(seed);
    let mut centroids = plus_plus(flat, n, dim, k, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let nearest_all: Vec<(usize, f64)> = flat.par_chunks(dim.max(1)).map(|x| nearest(x, &centroids)).collect();
        let mut next: Vec<usize> = nearest_all.iter().map(|p| p.0).collect();
        let mut sse: f64 = nearest_all.iter().map(|p| p.1).sum();

        let mut sizes = vec![0usize; k];
        for &c in &next {
            sizes[c] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| sizes[next[i]] > 1)
                .max_by(|&a, &b| nearest_all[a].1.total_cmp(&nearest_all[b].1).then(b.cmp(&a)));
            let Some(far) = far else { break };
            sse -= nearest_all[far].1;
            sizes[next[far]] -= 1;
            next[far] = c;
            sizes[c] = 1;
        }
        history.push(sse);
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
        centroids = cluster_means(&data, &assignment, k);
    }
    let sse = super::metrics::sse_view(data.view(), &assignment, centroids.view());
    Ok(ClusteringResult {
        algorithm: Algorithm::KMeans,
        k,
        assignment: assignment.iter().map(|&c| c as i32).collect(),
        centroids: Some(centroids),
        seed: Some(seed),
        warnings: if converged {
            Vec::new()
        } else {
            vec![format!("no fixpoint after {max_iter} iterations")]
        },
        detail: Detail::KMeans {
            sse,
            sse_history: history,
            iterations,
        },
    })
}

/// Lowest-SSE run out of `restarts` seeded k-means runs.
pub fn kmeans_best_of(
    data: &Array2<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusteringResult, ClusterError> {
    let mut best: Option<ClusteringResult> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans(data, k, child_seed(seed, r as u64), DEFAULT_MAX_ITER)?;
        if best.as_ref().is_none_or(|b| run.sse().unwrap() < b.sse().unwrap()) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

/// `(k, SSE)` for each k, best of five restarts each.
pub fn elbow_curve(
    data: &Array2<f64>,
    ks: impl IntoIterator<Item = usize>,
    seed: u64,
) -> Result<Vec<(usize, f64)>, ClusterError> {
    ks.into_iter()
        .map(|k| {
            Ok((
                k,
                kmeans_best_of(data, k, child_seed(seed, k as u64), ELBOW_RESTARTS)?
                    .sse()
                    .unwrap(),
            ))
        })
        .collect()
}
