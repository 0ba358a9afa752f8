use std::path::Path;

use ndarray::Array2;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{create_dir, prepare, with_workers, write_file, ClusterStudyConfig, PipelineError};
use crate::cluster::{
    birch, cluster_means, cut_tree, dbscan, elbow_curve, gmm, kmeans_best_of, linkage_tree, quality, sq_dist,
    write_dendrogram, write_quality_csv, Algorithm, ClusterError, ClusteringResult, Detail, Merge, QualityRow,
    DEFAULT_GMM_MAX_ITER, DEFAULT_REG, ELBOW_RESTARTS,
};
use crate::corpus::FeatureMatrix;
use crate::rng::{child_seed, seeded};

/// Rows sampled when deriving DBSCAN radii and the BIRCH threshold.
const AUTO_SAMPLE: usize = 500;
const EPS_QUANTILES: [f64; 3] = [0.5, 0.75, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub algorithm: Algorithm,
    pub param: String,
    pub silhouette: Option<f64>,
    pub ch_index: Option<f64>,
    pub sse: Option<f64>,
    pub n_clusters: usize,
    pub n_noise: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StudyRow {
    pub fn quality_row(&self) -> QualityRow {
        QualityRow {
            algorithm: self.algorithm,
            param: self.param.clone(),
            silhouette: self.silhouette,
            ch_index: self.ch_index,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterStudyOutput {
    pub rows: Vec<StudyRow>,
    /// `(k, SSE)` of k-means for every k in range.
    pub elbow: Vec<(usize, f64)>,
    /// Full agglomerative merge sequence.
    pub dendrogram: Vec<Merge>,
    /// Index into `rows` of the highest silhouette.
    pub recommendation: Option<usize>,
    pub eps: Vec<f64>,
    pub birch_threshold: f64,
}

impl ClusterStudyOutput {
    pub fn recommended(&self) -> Option<&StudyRow> {
        self.recommendation.map(|i| &self.rows[i])
    }

    pub fn best_k(&self, algorithm: Algorithm) -> Option<usize> {
        self.rows
            .iter()
            .filter(|r| r.algorithm == algorithm && r.silhouette.is_some())
            .fold(None::<&StudyRow>, |best, r| match best {
                Some(b) if b.silhouette >= r.silhouette => Some(b),
                _ => Some(r),
            })
            .and_then(|r| r.param.parse().ok())
    }
}

/// Distances from a seeded sample of rows to their `m`-th nearest row
/// (the row itself counts as the first), sorted ascending.
fn core_distances(data: &Array2<f64>, m: usize, seed: u64) -> Vec<f64> {
    let n = data.nrows();
    let data = data.as_standard_layout();
    let picks: Vec<usize> = if n > AUTO_SAMPLE {
        let mut v = sample(&mut seeded(seed), n, AUTO_SAMPLE).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    let m = m.clamp(1, n);
    let mut out: Vec<f64> = picks
        .par_iter()
        .map(|&i| {
            let x = data.row(i);
            let x = x.as_slice().unwrap();
            let mut d: Vec<f64> = data
                .rows()
                .into_iter()
                .map(|r| sq_dist(x, r.as_slice().unwrap()))
                .collect();
            d.select_nth_unstable_by(m - 1, f64::total_cmp);
            d[m - 1].sqrt()
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

fn scored(
    algorithm: Algorithm,
    param: String,
    data: &Array2<f64>,
    run: Result<ClusteringResult, ClusterError>,
) -> StudyRow {
    let mut row = StudyRow {
        algorithm,
        param,
        silhouette: None,
        ch_index: None,
        sse: None,
        n_clusters: 0,
        n_noise: 0,
        warnings: Vec::new(),
        error: None,
    };
    match run.and_then(|r| Ok((quality(data, &r)?, r))) {
        Ok((q, r)) => {
            row.silhouette = q.silhouette;
            row.ch_index = q.ch_index;
            row.sse = Some(q.sse);
            row.n_clusters = q.n_clusters;
            row.n_noise = q.n_noise;
            row.warnings = r.warnings;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Every configured algorithm over the k range (DBSCAN over the eps list),
/// scored by silhouette and Calinski-Harabasz.
pub fn cluster_study(
    matrix: &FeatureMatrix,
    cfg: &ClusterStudyConfig,
    seed: u64,
    workers: Option<usize>,
) -> Result<ClusterStudyOutput, PipelineError> {
    let input = prepare(matrix, cfg.input)?;
    let data = &input.data;
    if data.nrows() < 2 {
        return Err(ClusterError::KTooLarge {
            k: cfg.k_min,
            n: data.nrows(),
        }
        .into());
    }
    with_workers(workers, || {
        let ks: Vec<usize> = (cfg.k_min..=cfg.k_max).collect();
        let wants = |a: Algorithm| cfg.algorithms.contains(&a);

        let needs_auto = (wants(Algorithm::Dbscan) && cfg.eps.is_empty())
            || (wants(Algorithm::Birch) && cfg.birch_threshold.is_none());
        let core = if needs_auto {
            core_distances(data, cfg.min_pts, child_seed(seed, 50))
        } else {
            Vec::new()
        };
        let eps: Vec<f64> = if !cfg.eps.is_empty() {
            cfg.eps.clone()
        } else if wants(Algorithm::Dbscan) {
            let mut e: Vec<f64> = EPS_QUANTILES
                .iter()
                .map(|&q| quantile(&core, q))
                .filter(|&e| e > 0.0)
                .collect();
            e.dedup();
            e
        } else {
            Vec::new()
        };
        let birch_threshold = cfg.birch_threshold.unwrap_or_else(|| {
            let positive: Vec<f64> = core.iter().copied().filter(|&d| d > 0.0).collect();
            if positive.is_empty() {
                1.0
            } else {
                0.5 * quantile(&positive, 0.5)
            }
        });

        let dendrogram = if wants(Algorithm::Agglomerative) {
            linkage_tree(data, &vec![1.0; data.nrows()], cfg.linkage)
        } else {
            Vec::new()
        };

        #[derive(Clone, Copy)]
        enum Job {
            K(Algorithm, usize),
            Eps(f64),
        }
        let mut jobs = Vec::new();
        for &a in &cfg.algorithms {
            if a == Algorithm::Dbscan {
                jobs.extend(eps.iter().map(|&e| Job::Eps(e)));
            } else {
                jobs.extend(ks.iter().map(|&k| Job::K(a, k)));
            }
        }
        let n = data.nrows();
        let rows: Vec<StudyRow> = jobs
            .par_iter()
            .map(|&job| match job {
                Job::Eps(e) => scored(Algorithm::Dbscan, format!("{e}"), data, dbscan(data, e, cfg.min_pts)),
                Job::K(a, k) => {
                    let run = match a {
                        Algorithm::KMeans => kmeans_best_of(data, k, child_seed(seed, 60 + k as u64), ELBOW_RESTARTS),
                        Algorithm::Gmm => gmm(
                            data,
                            k,
                            child_seed(seed, 70 + k as u64),
                            DEFAULT_GMM_MAX_ITER,
                            DEFAULT_REG,
                        ),
                        Algorithm::Birch => birch(data, birch_threshold, cfg.birch_branching, k),
                        Algorithm::Agglomerative if k > n => Err(ClusterError::KTooLarge { k, n }),
                        Algorithm::Agglomerative => {
                            let assignment = cut_tree(n, &dendrogram, k);
                            Ok(ClusteringResult {
                                algorithm: a,
                                k,
                                centroids: Some(cluster_means(data, &assignment, k)),
                                assignment: assignment.iter().map(|&c| c as i32).collect(),
                                seed: None,
                                warnings: Vec::new(),
                                detail: Detail::Agglomerative {
                                    linkage: cfg.linkage,
                                    merges: Vec::new(),
                                },
                            })
                        }
                        Algorithm::Dbscan => unreachable!(),
                    };
                    scored(a, k.to_string(), data, run)
                }
            })
            .collect();

        let elbow = elbow_curve(data, ks.iter().copied().filter(|&k| k <= n), seed)?;
        let recommendation = rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.silhouette.map(|s| (i, s)))
            .fold(None::<(usize, f64)>, |best, (i, s)| match best {
                Some((_, b)) if b >= s => best,
                _ => Some((i, s)),
            })
            .map(|(i, _)| i);
        Ok(ClusterStudyOutput {
            rows,
            elbow,
            dendrogram,
            recommendation,
            eps,
            birch_threshold,
        })
    })
}

/// `cluster_quality.csv`, `elbow.csv`, `dendrogram.csv` and
/// `cluster_study.json` under `dir`.
pub fn write_cluster_study(dir: &Path, out: &ClusterStudyOutput) -> Result<(), PipelineError> {
    create_dir(dir)?;
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| PipelineError::Write { path, source }
    };
    let quality_rows: Vec<QualityRow> = out.rows.iter().map(StudyRow::quality_row).collect();
    let path = dir.join("cluster_quality.csv");
    let mut buf = Vec::new();
    write_quality_csv(&mut buf, &quality_rows).map_err(io(&path))?;
    write_file(&path, buf)?;

    let mut elbow = String::from("k,sse\n");
    for (k, s) in &out.elbow {
        elbow.push_str(&format!("{k},{s}\n"));
    }
    write_file(&dir.join("elbow.csv"), elbow)?;

    if !out.dendrogram.is_empty() {
        let path = dir.join("dendrogram.csv");
        let mut buf = Vec::new();
        write_dendrogram(&mut buf, &out.dendrogram).map_err(io(&path))?;
        write_file(&path, buf)?;
    }

    #[derive(Serialize)]
    struct Summary<'a> {
        rows: &'a [StudyRow],
        recommended: Option<&'a StudyRow>,
        eps: &'a [f64],
        birch_threshold: f64,
    }
    let summary = Summary {
        rows: &out.rows,
        recommended: out.recommended(),
        eps: &out.eps,
        birch_threshold: out.birch_threshold,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    write_file(&dir.join("cluster_study.json"), json)
}
