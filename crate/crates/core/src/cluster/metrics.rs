use ndarray::{Array2, ArrayBase, ArrayView2, Data, Ix2};
use rayon::prelude::*;

use super::{sq_dist, ClusterError};

/// Per-cluster means; clusters with no members get a zero row.
pub fn cluster_means<S: Data<Elem = f64>>(data: &ArrayBase<S, Ix2>, assignment: &[usize], k: usize) -> Array2<f64> {
    let mut means = Array2::zeros((k, data.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &c) in data.rows().into_iter().zip(assignment) {
        counts[c] += 1;
        let mut m = means.row_mut(c);
        m += &row;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            means.row_mut(c).mapv_inplace(|v| v / n as f64);
        }
    }
    means
}

fn n_clusters(assignment: &[usize]) -> usize {
    assignment.iter().max().map_or(0, |m| m + 1)
}

fn check_rows(data: &Array2<f64>, assignment: &[usize]) -> Result<(), ClusterError> {
    if data.nrows() != assignment.len() {
        return Err(ClusterError::DimMismatch {
            expected: data.nrows(),
            got: assignment.len(),
        });
    }
    Ok(())
}

/// Sum of squared Euclidean distances from each point to its centroid.
pub fn sse(data: &Array2<f64>, assignment: &[usize], centroids: &Array2<f64>) -> Result<f64, ClusterError> {
    check_rows(data, assignment)?;
    if centroids.ncols() != data.ncols() {
        return Err(ClusterError::DimMismatch {
            expected: data.ncols(),
            got: centroids.ncols(),
        });
    }
    if let Some(&c) = assignment.iter().find(|&&c| c >= centroids.nrows()) {
        return Err(ClusterError::DimMismatch {
            expected: centroids.nrows(),
            got: c + 1,
        });
    }
    let data = data.as_standard_layout();
    let cents = centroids.as_standard_layout();
    Ok(sse_view(data.view(), assignment, cents.view()))
}

pub(crate) fn sse_view(data: ArrayView2<'_, f64>, assignment: &[usize], centroids: ArrayView2<'_, f64>) -> f64 {
    data.rows()
        .into_iter()
        .zip(assignment)
        .map(|(r, &c)| sq_dist(r.as_slice().unwrap(), centroids.row(c).as_slice().unwrap()))
        .sum()
}

/// Mean silhouette over all points. `a(i)` averages over the other members
/// of `i`'s cluster, `b(i)` is the lowest mean distance to another
/// non-empty cluster, and members of singleton clusters score 0.
pub fn silhouette(data: &Array2<f64>, assignment: &[usize]) -> Result<f64, ClusterError> {
    check_rows(data, assignment)?;
    let k = n_clusters(assignment);
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let data = data.as_standard_layout();
    let flat = data.as_slice().unwrap();
    let d = data.ncols().max(1);
    let n = assignment.len();
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = assignment[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let xi = &flat[i * d..(i + 1) * d];
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[assignment[j]] += sq_dist(xi, &flat[j * d..(j + 1) * d]).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / n as f64)
}

/// Calinski-Harabasz index `(SSE_B / SSE_W)·(N − k)/(k − 1)`, with `k` the
/// number of non-empty clusters. Returns `f64::INFINITY` when every
/// cluster has zero spread.
pub fn ch_index(data: &Array2<f64>, assignment: &[usize]) -> Result<f64, ClusterError> {
    check_rows(data, assignment)?;
    let k_slots = n_clusters(assignment);
    let mut sizes = vec![0usize; k_slots];
    for &c in assignment {
        sizes[c] += 1;
    }
    let k = sizes.iter().filter(|&&s| s > 0).count();
    let n = assignment.len();
    if k < 2 {
        return Err(ClusterError::SingleCluster);
    }
    if k >= n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    let means = cluster_means(data, assignment, k_slots);
    let within = sse(data, assignment, &means)?;
    let global = data.mean_axis(ndarray::Axis(0)).unwrap().insert_axis(ndarray::Axis(0));
    let total = sse(data, &vec![0; n], &global)?;
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    let between = (total - within).max(0.0);
    Ok(between / within * (n - k) as f64 / (k - 1) as f64)
}
