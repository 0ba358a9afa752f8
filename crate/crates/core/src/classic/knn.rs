use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ClassicError;
use crate::corpus::FeatureMatrix;

/// Brute-force k-nearest-neighbour vote over stored training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub data: Array2<f64>,
    pub malware: Vec<bool>,
}

impl Knn {
    /// Indices of the `k` nearest training rows, nearest first. Equal
    /// distances go to the lower row index.
    pub fn neighbors(&self, row: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .data
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let d2: f64 = r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    /// Malware fraction among the neighbours.
    pub fn score(&self, row: &[f64]) -> f64 {
        let nn = self.neighbors(row);
        nn.iter().filter(|&&i| self.malware[i]).count() as f64 / nn.len() as f64
    }
}

pub fn train_knn(train: &FeatureMatrix, k: usize) -> Result<Knn, ClassicError> {
    if k == 0 {
        return Err(ClassicError::InvalidParams("k must be positive".into()));
    }
    if train.n_rows() < k {
        return Err(ClassicError::TooFewRows {
            needed: k,
            got: train.n_rows(),
        });
    }
    Ok(Knn {
        k,
        data: train.data.clone(),
        malware: train.targets(),
    })
}
