use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{create_dir, prepare, with_workers, write_file, ClassifyConfig, PipelineError};
use crate::classic::ClassifierKind;
use crate::cluster::kmeans_best_of;
use crate::corpus::{split, FeatureMatrix, Label};
use crate::eval::{report_table, timed_fit_eval, EvalRow, ReportFormat};
use crate::rng::child_seed;

const ORIGINAL: &str = "Original Data";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "kebab-case")]
pub enum ClusterDecision {
    /// Every member gets `label`.
    DirectLabel { label: Label },
    /// Classifiers trained on the cluster's own rows.
    TrainClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster: usize,
    pub size: usize,
    pub n_malware: usize,
    pub n_benign: usize,
    pub malware_pct: f64,
    pub benign_pct: f64,
    #[serde(flatten)]
    pub decision: ClusterDecision,
    /// Empty for direct-label clusters.
    pub rows: Vec<EvalRow>,
    /// Parent-matrix rows in this cluster, ascending.
    pub members: Vec<usize>,
    /// Free text, e.g. the dominant malware family when known.
    pub note: String,
    pub warnings: Vec<String>,
}

impl ClusterReport {
    pub fn row(&self, classifier: ClassifierKind) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.classifier == classifier.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterClassifyReport {
    pub n_rows: usize,
    pub seed: u64,
    pub purity: f64,
    pub ids: Vec<String>,
    pub assignment: Vec<usize>,
    pub clusters: Vec<ClusterReport>,
    /// The same classifiers on the whole corpus, for comparison.
    pub baseline: Vec<EvalRow>,
    pub warnings: Vec<String>,
}

impl ClusterClassifyReport {
    pub fn direct_labelled(&self) -> impl Iterator<Item = &ClusterReport> {
        self.clusters
            .iter()
            .filter(|c| matches!(c.decision, ClusterDecision::DirectLabel { .. }))
    }

    pub fn trained(&self) -> impl Iterator<Item = &ClusterReport> {
        self.clusters
            .iter()
            .filter(|c| c.decision == ClusterDecision::TrainClassifier)
    }

    pub fn baseline_row(&self, classifier: ClassifierKind) -> Option<&EvalRow> {
        self.baseline.iter().find(|r| r.classifier == classifier.name())
    }
}

fn classifier_seed(seed: u64, c: ClassifierKind) -> u64 {
    let idx = ClassifierKind::ALL.iter().position(|&k| k == c).unwrap() as u64;
    child_seed(seed, 300 + idx)
}

/// Fresh stratified split of `matrix`, then every classifier on it.
fn evaluate_all(matrix: &FeatureMatrix, classifiers: &[ClassifierKind], split_seed: u64, seed: u64) -> Vec<EvalRow> {
    match split(matrix, 0.8, split_seed, true) {
        Ok(pair) => classifiers
            .par_iter()
            .map(|&c| timed_fit_eval(ORIGINAL, c, &pair.train, &pair.test, classifier_seed(seed, c)).0)
            .collect(),
        Err(e) => classifiers
            .iter()
            .map(|c| EvalRow::failed(ORIGINAL, matrix.n_features(), c.name(), e.to_string()))
            .collect(),
    }
}

/// k-means with k = 2, then per cluster: label outright when one class
/// holds at least `purity` of it, otherwise train the classifiers inside it.
pub fn cluster_classify(
    matrix: &FeatureMatrix,
    cfg: &ClassifyConfig,
    seed: u64,
    workers: Option<usize>,
) -> Result<ClusterClassifyReport, PipelineError> {
    let space = prepare(matrix, cfg.cluster_input)?;
    let features = prepare(matrix, cfg.classifier_input)?;
    with_workers(workers, || {
        let km = kmeans_best_of(&space.data, 2, child_seed(seed, 20), cfg.restarts)?;
        let assignment: Vec<usize> = km.assignment.iter().map(|&c| c as usize).collect();
        let mut warnings: Vec<String> = km.warnings.clone();

        let mut clusters = Vec::new();
        for c in 0..km.k {
            let members: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] == c).collect();
            let size = members.len();
            let n_malware = members.iter().filter(|&&i| matrix.labels[i].is_malware()).count();
            let n_benign = size - n_malware;
            let pct = |x: usize| if size == 0 { 0.0 } else { 100.0 * x as f64 / size as f64 };
            let majority = Label::from_bool(n_malware > n_benign);
            let share = n_malware.max(n_benign) as f64 / size.max(1) as f64;
            let mut cw = Vec::new();
            let decision = if size < cfg.min_cluster_size {
                cw.push(format!(
                    "degenerate cluster: {size} rows is below {}, labelled {majority} by majority",
                    cfg.min_cluster_size
                ));
                ClusterDecision::DirectLabel { label: majority }
            } else if share >= cfg.purity {
                ClusterDecision::DirectLabel { label: majority }
            } else {
                ClusterDecision::TrainClassifier
            };
            let rows = if decision == ClusterDecision::TrainClassifier {
                let sub = features.select_rows(&members);
                evaluate_all(&sub, &cfg.classifiers, child_seed(seed, 200 + c as u64), seed)
            } else {
                Vec::new()
            };
            cw.extend(
                rows.iter()
                    .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.classifier))),
            );
            warnings.extend(cw.iter().map(|w| format!("cluster {c}: {w}")));
            clusters.push(ClusterReport {
                cluster: c,
                size,
                n_malware,
                n_benign,
                malware_pct: pct(n_malware),
                benign_pct: pct(n_benign),
                decision,
                rows,
                members,
                note: String::new(),
                warnings: cw,
            });
        }

        let baseline = if cfg.baseline {
            evaluate_all(&features, &cfg.classifiers, seed, seed)
        } else {
            Vec::new()
        };
        Ok(ClusterClassifyReport {
            n_rows: matrix.n_rows(),
            seed,
            purity: cfg.purity,
            ids: matrix.ids.clone(),
            assignment,
            clusters,
            baseline,
            warnings,
        })
    })
}

/// `cluster_classify.json`, `cluster_summary.csv`, `cluster_rows.csv`,
/// `cluster_classify.md` and `cluster_assignments.csv` under `dir`.
pub fn write_cluster_classify(dir: &Path, report: &ClusterClassifyReport) -> Result<(), PipelineError> {
    create_dir(dir)?;
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    write_file(&dir.join("cluster_classify.json"), json)?;

    let mut summary = String::from("cluster,size,malware_pct,benign_pct,decision,label\n");
    for c in &report.clusters {
        let (decision, label) = match c.decision {
            ClusterDecision::DirectLabel { label } => ("direct-label", label.as_str()),
            ClusterDecision::TrainClassifier => ("train-classifier", ""),
        };
        summary.push_str(&format!(
            "{},{},{:.4},{:.4},{decision},{label}\n",
            c.cluster, c.size, c.malware_pct, c.benign_pct
        ));
    }
    write_file(&dir.join("cluster_summary.csv"), summary)?;

    // per-cluster report lines, prefixed with the cluster id; `all` is the
    // whole-corpus baseline
    let mut rows_csv = String::new();
    let mut md = String::new();
    let groups = report
        .clusters
        .iter()
        .filter(|c| !c.rows.is_empty())
        .map(|c| (c.cluster.to_string(), &c.rows))
        .chain((!report.baseline.is_empty()).then(|| ("all".to_string(), &report.baseline)));
    for (name, rows) in groups {
        let csv = report_table(rows, ReportFormat::Csv);
        let mut lines = csv.lines();
        if rows_csv.is_empty() {
            rows_csv = format!("cluster,{}\n", lines.next().unwrap());
        } else {
            lines.next();
        }
        for l in lines {
            rows_csv.push_str(&format!("{name},{l}\n"));
        }
        md.push_str(&format!(
            "### Cluster {name}\n\n{}\n",
            report_table(rows, ReportFormat::Markdown)
        ));
    }
    write_file(&dir.join("cluster_rows.csv"), rows_csv)?;
    write_file(&dir.join("cluster_classify.md"), md)?;

    let mut assign = String::from("app_id,cluster\n");
    for (id, c) in report.ids.iter().zip(&report.assignment) {
        assign.push_str(&format!("{id},{c}\n"));
    }
    write_file(&dir.join("cluster_assignments.csv"), assign)
}
