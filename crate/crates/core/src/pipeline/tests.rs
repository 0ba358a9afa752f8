use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::classic::ClassifierKind;
use crate::cluster::Algorithm;
use crate::corpus::{split, synth_corpus, Label, SynthProfile};
use crate::rng::seeded;

fn small_corpus(n: usize, seed: u64) -> FeatureMatrix {
    synth_corpus(n, n, &SynthProfile::default_profile(), seed).unwrap()
}

fn only(reducers: &[ReducerKind], classifiers: &[ClassifierKind]) -> SweepConfig {
    SweepConfig {
        reducers: reducers.to_vec(),
        classifiers: classifiers.to_vec(),
        ..SweepConfig::default()
    }
}

fn blobs(per: usize, sep: f64, seed: u64) -> FeatureMatrix {
    let mut rng = seeded(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let n = 2 * per;
    let data = Array2::from_shape_fn((n, 2), |(i, j)| {
        let centre = if i < per { 0.0 } else { sep };
        (if j == 0 { centre } else { 0.0 }) + noise.sample(&mut rng)
    });
    let labels = (0..n).map(|i| Label::from_bool(i >= per)).collect();
    FeatureMatrix::new(
        (0..n).map(|i| format!("p{i}")).collect(),
        labels,
        data,
        vec!["x".into(), "y".into()],
        Scale::Reduced,
    )
    .unwrap()
}

#[test]
fn config_defaults_and_toml() {
    let cfg = PipelineConfig::default();
    assert_eq!(cfg.sweep.reducers.len(), 5);
    assert_eq!(cfg.sweep.classifiers.len(), 8);
    assert_eq!(cfg.cluster_classify.purity, 0.98);
    assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);

    let text = r#"
seed = 7
out_dir = "results"
[corpus]
kind = "synthetic"
profile = "benign-mode"
n_benign = 10
n_malware = 12
[sweep]
reducers = ["none", "PCA"]
classifiers = ["RF"]
[cluster_study]
algorithms = ["kmeans", "dbscan"]
eps = [0.5, 1.0]
"#;
    let cfg = PipelineConfig::from_toml(text).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.sweep.reducers, vec![ReducerKind::Original, ReducerKind::Pca]);
    assert_eq!(cfg.sweep.classifiers, vec![ClassifierKind::Rf]);
    assert_eq!(cfg.cluster_study.eps, vec![0.5, 1.0]);
    assert_eq!(cfg.cluster_study.k_max, 5);

    for bad in [
        "[sweep]\nclassifiers = []",
        "[sweep]\ntrain_ratio = 1.0",
        "[cluster_study]\nk_min = 1",
        "[cluster_study]\neps = [0.0]",
        "mystery = 1",
    ] {
        assert!(
            matches!(PipelineConfig::from_toml(bad), Err(PipelineError::Config(_))),
            "{bad}"
        );
    }
}

#[test]
fn reducer_names() {
    for r in ReducerKind::ALL {
        assert_eq!(r.tag().parse::<ReducerKind>().unwrap(), r);
    }
    assert_eq!("none".parse::<ReducerKind>().unwrap(), ReducerKind::Original);
    assert!("tsne".parse::<ReducerKind>().is_err());
}

#[test]
fn single_cell_sweep() {
    let m = small_corpus(40, 3);
    let out = run_sweep(&m, &only(&[ReducerKind::Original], &[ClassifierKind::Dt]), 1, None).unwrap();
    assert_eq!(out.rows.len(), 1);
    let row = &out.rows[0];
    assert_eq!(
        (row.feature_reduction.as_str(), row.classifier.as_str()),
        ("Original Data", "DT")
    );
    assert_eq!(row.n_features, 256);
    assert!(row.reducer_fit_sec.is_none());
    assert_eq!(out.n_train + out.n_test, 80);
}

#[test]
fn sweep_order_and_widths() {
    let m = small_corpus(40, 4);
    let cfg = only(
        &[ReducerKind::Original, ReducerKind::VarianceTopK, ReducerKind::Pca],
        &[ClassifierKind::Dt, ClassifierKind::Knn],
    );
    let out = run_sweep(&m, &cfg, 2, Some(2)).unwrap();
    let cells: Vec<(&str, &str, usize)> = out
        .rows
        .iter()
        .map(|r| (r.classifier.as_str(), r.feature_reduction.as_str(), r.n_features))
        .collect();
    assert_eq!(
        cells,
        vec![
            ("DT", "Original Data", 256),
            ("DT", "VT", 30),
            ("DT", "PCA", 15),
            ("kNN", "Original Data", 256),
            ("kNN", "VT", 30),
            ("kNN", "PCA", 15),
        ]
    );
    assert!(out.rows.iter().all(|r| !r.is_failed()));
}

fn without_times(rows: &[crate::eval::EvalRow]) -> Vec<crate::eval::EvalRow> {
    rows.iter()
        .cloned()
        .map(|mut r| {
            r.train_time_sec = 0.0;
            r.test_time_sec = 0.0;
            r.reducer_fit_sec = None;
            r
        })
        .collect()
}

#[test]
fn sweep_is_deterministic_across_worker_counts() {
    let m = small_corpus(30, 5);
    let cfg = only(
        &[ReducerKind::Original, ReducerKind::Pca],
        &[ClassifierKind::Rf, ClassifierKind::Svm],
    );
    let a = run_sweep(&m, &cfg, 9, Some(1)).unwrap();
    let b = run_sweep(&m, &cfg, 9, Some(4)).unwrap();
    assert_eq!(without_times(&a.rows), without_times(&b.rows));
}

#[test]
fn reducers_never_see_test_rows() {
    let m = normalize_rows(&small_corpus(40, 6)).matrix;
    let pair = split(&m, 0.8, 1, true).unwrap();
    // a far-off sentinel in the test half
    let mut test = pair.test.clone();
    let mut data = test.data.clone();
    data.row_mut(0).fill(1.0 / 256.0);
    data[[0, 0]] = 50.0;
    test.data = data;
    let poisoned = corpus::SplitPair { test, ..pair.clone() };

    let kinds = [ReducerKind::VarianceTopK, ReducerKind::Pca, ReducerKind::Ae1L];
    let clean = fit_reducers(&pair, &kinds, 3);
    let dirty = fit_reducers(&poisoned, &kinds, 3);
    for (c, d) in clean.iter().zip(&dirty) {
        assert_eq!(c.reducer, d.reducer, "{} parameters moved", c.kind);
    }
}

#[test]
fn failed_reducer_marks_its_cells() {
    // 10 training rows cannot give 15 principal components
    let m = small_corpus(6, 7);
    let cfg = only(&[ReducerKind::Original, ReducerKind::Pca], &[ClassifierKind::Dt]);
    let out = run_sweep(&m, &cfg, 1, None).unwrap();
    assert_eq!(out.rows.len(), 2);
    assert!(!out.rows[0].is_failed());
    assert!(out.rows[1].is_failed());
    assert_eq!(out.rows[1].n_features, 15);
    assert!(!out.all_failed());
    assert!(out.warnings.iter().any(|w| w.starts_with("PCA")));
}

#[test]
fn study_recommends_two_for_separated_blobs() {
    let m = blobs(40, 20.0, 1);
    let cfg = ClusterStudyConfig::default();
    let out = cluster_study(&m, &cfg, 1, None).unwrap();
    assert_eq!(out.best_k(Algorithm::KMeans), Some(2));
    assert_eq!(out.elbow.iter().map(|e| e.0).collect::<Vec<_>>(), vec![2, 3, 4, 5]);
    assert_eq!(out.dendrogram.len(), 79);
    assert_eq!(
        out.eps.len(),
        out.rows.iter().filter(|r| r.algorithm == Algorithm::Dbscan).count()
    );
    assert_eq!(out.rows.len(), 4 * 4 + out.eps.len());
    let best = out.recommended().unwrap();
    assert!(best.silhouette.unwrap() > 0.8, "{best:?}");
    for r in out.rows.iter().filter(|r| r.algorithm != Algorithm::Dbscan) {
        assert!(r.error.is_none(), "{r:?}");
    }
}

#[test]
fn study_with_explicit_eps() {
    let m = blobs(20, 20.0, 2);
    let cfg = ClusterStudyConfig {
        algorithms: vec![Algorithm::Dbscan],
        eps: vec![3.0],
        ..ClusterStudyConfig::default()
    };
    let out = cluster_study(&m, &cfg, 1, None).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].param, "3");
    assert_eq!(out.rows[0].n_clusters, 2);
}

fn classify_cfg(purity: f64) -> ClassifyConfig {
    ClassifyConfig {
        purity,
        classifiers: vec![ClassifierKind::Dt],
        ..ClassifyConfig::default()
    }
}

#[test]
fn benign_mode_gets_direct_label() {
    let m = synth_corpus(150, 150, &SynthProfile::with_benign_mode(), 11).unwrap();
    let report = cluster_classify(&m, &classify_cfg(0.98), 11, None).unwrap();
    assert_eq!(report.clusters.iter().map(|c| c.size).sum::<usize>(), m.n_rows());
    let direct: Vec<_> = report.direct_labelled().collect();
    assert_eq!(direct.len(), 1);
    assert_eq!(
        direct[0].decision,
        ClusterDecision::DirectLabel { label: Label::Benign }
    );
    assert!(direct[0].rows.is_empty());
    let trained: Vec<_> = report.trained().collect();
    assert_eq!(trained.len(), 1);
    assert_eq!(trained[0].rows.len(), 1);
    assert!(!trained[0].rows[0].is_failed());
    assert_eq!(report.baseline.len(), 1);

    // members partition the rows and match the assignment
    let mut seen = vec![false; m.n_rows()];
    for c in &report.clusters {
        for &i in &c.members {
            assert!(!seen[i]);
            seen[i] = true;
            assert_eq!(report.assignment[i], c.cluster);
        }
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn purity_above_one_trains_everywhere() {
    let m = synth_corpus(150, 150, &SynthProfile::with_benign_mode(), 11).unwrap();
    let report = cluster_classify(&m, &classify_cfg(1.01), 11, None).unwrap();
    assert_eq!(report.direct_labelled().count(), 0);
    assert_eq!(report.trained().count(), 2);
}

#[test]
fn tiny_cluster_is_degenerate() {
    let mut m = blobs(30, 8.0, 3);
    // three outliers far away form their own cluster
    let mut rng = seeded(1);
    for i in 0..3 {
        m.data[[i, 0]] = 1000.0 + rng.random::<f64>();
    }
    let report = cluster_classify(&m, &classify_cfg(0.98), 1, None).unwrap();
    let small = report.clusters.iter().find(|c| c.size == 3).unwrap();
    assert!(matches!(small.decision, ClusterDecision::DirectLabel { .. }));
    assert!(small.warnings.iter().any(|w| w.contains("degenerate")));
}

#[test]
fn writers_produce_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_corpus(25, 8);
    let out = run_sweep(&m, &only(&[ReducerKind::Original], &[ClassifierKind::Dt]), 1, None).unwrap();
    write_sweep(dir.path(), &out).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("sweep_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let study_cfg = ClusterStudyConfig {
        algorithms: vec![Algorithm::KMeans, Algorithm::Agglomerative],
        k_max: 3,
        ..ClusterStudyConfig::default()
    };
    let study = cluster_study(&m, &study_cfg, 1, None).unwrap();
    write_cluster_study(dir.path(), &study).unwrap();
    let elbow = std::fs::read_to_string(dir.path().join("elbow.csv")).unwrap();
    assert_eq!(elbow.lines().count(), 3);
    let q = std::fs::read_to_string(dir.path().join("cluster_quality.csv")).unwrap();
    assert_eq!(q.lines().count(), 5);
    let dendro = std::fs::read_to_string(dir.path().join("dendrogram.csv")).unwrap();
    assert_eq!(dendro.lines().count(), 50);

    let report = cluster_classify(&m, &classify_cfg(1.01), 1, None).unwrap();
    write_cluster_classify(dir.path(), &report).unwrap();
    let assign = std::fs::read_to_string(dir.path().join("cluster_assignments.csv")).unwrap();
    assert_eq!(assign.lines().count(), 51);

    write_plot_data(dir.path(), &m, Scale::RawCounts, 1).unwrap();
    let top = std::fs::read_to_string(dir.path().join("plot_top_differences.csv")).unwrap();
    assert_eq!(top.lines().count(), 16);
    let scatter = std::fs::read_to_string(dir.path().join("plot_pca_scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 51);
    let elbow = std::fs::read_to_string(dir.path().join("plot_elbow.csv")).unwrap();
    assert_eq!(elbow.lines().count(), 11);
}

#[test]
fn load_corpus_sources() {
    let loaded = load_corpus(
        &CorpusSource::Synthetic {
            profile: Default::default(),
            n_benign: 5,
            n_malware: 4,
        },
        1,
    )
    .unwrap();
    assert_eq!(loaded.matrix.class_counts(), (5, 4));
    let missing = CorpusSource::Manifest {
        path: "/nonexistent/manifest.csv".into(),
    };
    assert!(matches!(
        load_corpus(&missing, 1),
        Err(PipelineError::Corpus(CorpusError::MissingFile(_)))
    ));
}
