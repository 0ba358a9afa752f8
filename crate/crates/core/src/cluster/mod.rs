//! Clustering: k-means, agglomerative, BIRCH, DBSCAN and diagonal GMM, with
//! SSE, silhouette and Calinski-Harabasz quality scores.

mod agglo;
mod birch;
mod dbscan;
mod gmm;
mod kmeans;
mod metrics;

pub use agglo::{agglomerative, cut_tree, linkage_tree, Linkage, Merge};
pub use birch::{birch, Cf, CfTree};
pub use dbscan::{dbscan, DEFAULT_MIN_PTS};
pub use gmm::{gmm, DEFAULT_GMM_MAX_ITER, DEFAULT_REG};
pub use kmeans::{elbow_curve, kmeans, kmeans_best_of, DEFAULT_MAX_ITER, ELBOW_RESTARTS};
pub use metrics::{ch_index, cluster_means, silhouette, sse};

use std::fmt;
use std::io::Write;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Assignment value for DBSCAN noise.
pub const NOISE: i32 = -1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("need at least two non-empty clusters")]
    SingleCluster,
    #[error("k = {k} is out of range for {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    KMeans,
    Agglomerative,
    Birch,
    Dbscan,
    Gmm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::Agglomerative => "agglomerative",
            Algorithm::Birch => "birch",
            Algorithm::Dbscan => "dbscan",
            Algorithm::Gmm => "gmm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Algorithm::KMeans,
            Algorithm::Agglomerative,
            Algorithm::Birch,
            Algorithm::Dbscan,
            Algorithm::Gmm,
        ]
        .into_iter()
        .find(|a| a.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown clustering algorithm {s:?}"))
    }
}

/// Algorithm-specific output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum Detail {
    KMeans {
        sse: f64,
        /// SSE after each assignment step.
        sse_history: Vec<f64>,
        iterations: usize,
    },
    Agglomerative {
        linkage: Linkage,
        merges: Vec<Merge>,
    },
    Birch {
        threshold: f64,
        branching_factor: usize,
        n_leaf_entries: usize,
    },
    Dbscan {
        eps: f64,
        min_pts: usize,
        n_core: usize,
        n_noise: usize,
    },
    Gmm {
        weights: Vec<f64>,
        variances: Array2<f64>,
        /// Mean per-point log-likelihood after each E-step.
        loglik_history: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub algorithm: Algorithm,
    /// Clusters requested, or found for DBSCAN.
    pub k: usize,
    /// Cluster id per row; [`NOISE`] for DBSCAN noise.
    pub assignment: Vec<i32>,
    /// Centres for the centre-based methods, component means for GMM.
    pub centroids: Option<Array2<f64>>,
    pub seed: Option<u64>,
    pub warnings: Vec<String>,
    pub detail: Detail,
}

impl ClusteringResult {
    /// Final k-means SSE.
    pub fn sse(&self) -> Option<f64> {
        match self.detail {
            Detail::KMeans { sse, .. } => Some(sse),
            _ => None,
        }
    }

    pub fn n_noise(&self) -> usize {
        self.assignment.iter().filter(|&&a| a == NOISE).count()
    }

    /// Rows per cluster id.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignment {
            if a >= 0 {
                sizes[a as usize] += 1;
            }
        }
        sizes
    }

    pub fn merges(&self) -> Option<&[Merge]> {
        match &self.detail {
            Detail::Agglomerative { merges, .. } => Some(merges),
            _ => None,
        }
    }
}

/// Quality of a clustering. Noise points are left out of every score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    pub sse: f64,
    /// `None` with fewer than two clusters.
    pub silhouette: Option<f64>,
    /// `None` with fewer than two clusters or too few points; infinite when
    /// every cluster has zero spread.
    pub ch_index: Option<f64>,
    pub n_clusters: usize,
    pub n_noise: usize,
}

pub fn quality(data: &Array2<f64>, result: &ClusteringResult) -> Result<ClusterQuality, ClusterError> {
    if data.nrows() != result.assignment.len() {
        return Err(ClusterError::DimMismatch {
            expected: data.nrows(),
            got: result.assignment.len(),
        });
    }
    let kept: Vec<usize> = (0..data.nrows()).filter(|&i| result.assignment[i] >= 0).collect();
    let labels: Vec<usize> = kept.iter().map(|&i| result.assignment[i] as usize).collect();
    let sub = data.select(Axis(0), &kept);
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let means = cluster_means(&sub, &labels, k);
    let n_clusters = {
        let mut seen = vec![false; k];
        labels.iter().for_each(|&c| seen[c] = true);
        seen.iter().filter(|&&s| s).count()
    };
    Ok(ClusterQuality {
        sse: sse(&sub, &labels, &means)?,
        silhouette: silhouette(&sub, &labels).ok(),
        ch_index: ch_index(&sub, &labels).ok(),
        n_clusters,
        n_noise: result.n_noise(),
    })
}

/// `app_id,cluster` rows.
pub fn write_assignments<W: Write>(mut out: W, ids: &[String], result: &ClusteringResult) -> std::io::Result<()> {
    writeln!(out, "app_id,cluster")?;
    for (id, a) in ids.iter().zip(&result.assignment) {
        writeln!(out, "{id},{a}")?;
    }
    Ok(())
}

/// `step,cluster_a,cluster_b,distance,size` rows.
pub fn write_dendrogram<W: Write>(mut out: W, merges: &[Merge]) -> std::io::Result<()> {
    writeln!(out, "step,cluster_a,cluster_b,distance,size")?;
    for m in merges {
        writeln!(
            out,
            "{},{},{},{},{}",
            m.step, m.cluster_a, m.cluster_b, m.distance, m.size
        )?;
    }
    Ok(())
}

/// One line of the cluster-quality table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub algorithm: Algorithm,
    /// `k` value, or `eps` for DBSCAN.
    pub param: String,
    pub silhouette: Option<f64>,
    pub ch_index: Option<f64>,
}

/// `algorithm,param,silhouette,ch_index`; missing scores are left empty.
pub fn write_quality_csv<W: Write>(mut out: W, rows: &[QualityRow]) -> std::io::Result<()> {
    writeln!(out, "algorithm,param,silhouette,ch_index")?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.5}")).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.algorithm,
            r.param,
            opt(r.silhouette),
            opt(r.ch_index)
        )?;
    }
    Ok(())
}
