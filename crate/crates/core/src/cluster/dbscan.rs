use std::collections::VecDeque;

use ndarray::Array2;
use rayon::prelude::*;

use super::{sq_dist, Algorithm, ClusterError, ClusteringResult, Detail, NOISE};

pub const DEFAULT_MIN_PTS: usize = 4;

/// Density clustering. A point is core when at least `min_pts` points
/// (itself included) lie within `eps`. Clusters grow from cores in row
/// order; non-core points reached by no core are noise (`-1`).
pub fn dbscan(data: &Array2<f64>, eps: f64, min_pts: usize) -> Result<ClusteringResult, ClusterError> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(ClusterError::InvalidParams(
            "DBSCAN needs eps > 0 and min_pts ≥ 1".into(),
        ));
    }
    let data = data.as_standard_layout();
    let n = data.nrows();
    let dim = data.ncols().max(1);
    let flat = data.as_slice().unwrap();
    let row = |i: usize| &flat[i * dim..(i + 1) * dim];
    let eps2 = eps * eps;
    let region = |i: usize| -> Vec<usize> {
        let x = row(i);
        (0..n).filter(|&j| sq_dist(x, row(j)) <= eps2).collect()
    };
    let core: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = row(i);
            (0..n).filter(|&j| sq_dist(x, row(j)) <= eps2).take(min_pts).count() >= min_pts
        })
        .collect();

    let mut assignment = vec![NOISE; n];
    let mut k = 0;
    for start in 0..n {
        if !core[start] || assignment[start] != NOISE {
            continue;
        }
        let id = k as i32;
        k += 1;
        assignment[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for q in region(p) {
                if assignment[q] != NOISE {
                    continue;
                }
                assignment[q] = id;
                if core[q] {
                    queue.push_back(q);
                }
            }
        }
    }
    let n_core = core.iter().filter(|&&c| c).count();
    let n_noise = assignment.iter().filter(|&&a| a == NOISE).count();
    Ok(ClusteringResult {
        algorithm: Algorithm::Dbscan,
        k,
        assignment,
        centroids: None,
        seed: None,
        warnings: Vec::new(),
        detail: Detail::Dbscan {
            eps,
            min_pts,
            n_core,
            n_noise,
        },
    })
}
