mod common;

use ndarray::Array2;
use opfreq::classic::{ClassifierKind, Model};
use opfreq::corpus::{extract_corpus, extract_path, split, synth_corpus, LabelManifest, ManifestEntry, SynthProfile};
use opfreq::eval::roc_auc;
use opfreq::features::normalize_rows;
use opfreq::rng::seeded;
use opfreq::{FeatureMatrix, Label, Scale};
use rand::seq::SliceRandom;
use rand::Rng;

fn corpus(n: usize, seed: u64) -> FeatureMatrix {
    let raw = synth_corpus(n, n, &SynthProfile::default_profile(), seed).unwrap();
    normalize_rows(&raw).matrix
}

#[test]
fn forest_at_least_matches_a_single_tree() {
    for seed in 0..10 {
        let m = corpus(150, 100 + seed);
        let pair = split(&m, 0.8, seed, true).unwrap();
        let auc = |kind: ClassifierKind| {
            let model = kind.fit(&pair.train, seed).unwrap();
            roc_auc(&pair.test.labels, &model.score_rows(&pair.test.data)).unwrap()
        };
        let (rf, dt) = (auc(ClassifierKind::Rf), auc(ClassifierKind::Dt));
        assert!(rf >= dt - 0.01, "seed {seed}: RF {rf} < DT {dt}");
    }
}

fn random_matrix(n: usize, d: usize, seed: u64) -> FeatureMatrix {
    let mut rng = seeded(seed);
    let data = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
    let labels = (0..n)
        .map(|i| Label::from_bool(data[[i, 0]] + data[[i, 1]] > 1.0))
        .collect();
    FeatureMatrix::new(
        (0..n).map(|i| format!("r{i}")).collect(),
        labels,
        data,
        (0..d).map(|j| format!("f{j}")).collect(),
        Scale::Reduced,
    )
    .unwrap()
}

#[test]
fn knn_ignores_training_row_order() {
    let train = random_matrix(60, 4, 1);
    let queries = random_matrix(40, 4, 2);
    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    order.shuffle(&mut seeded(3));
    let shuffled = train.select_rows(&order);
    let a = ClassifierKind::Knn.fit(&train, 0).unwrap();
    let b = ClassifierKind::Knn.fit(&shuffled, 0).unwrap();
    assert_eq!(a.score_rows(&queries.data), b.score_rows(&queries.data));
}

#[test]
fn every_model_predicts_by_thresholding_its_score_and_reloads_exactly() {
    let m = random_matrix(80, 3, 4);
    for kind in ClassifierKind::ALL {
        let model = kind.fit(&m, 7).unwrap();
        let scores = model.score_rows(&m.data);
        let predicted = model.predict_rows(&m.data);
        for (s, p) in scores.iter().zip(&predicted) {
            assert_eq!(*p, Label::from_bool(*s >= model.threshold()), "{kind}");
        }
        let back = Model::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back.score_rows(&m.data), scores, "{kind} reload");
    }
}

#[test]
fn forest_is_reproducible_across_worker_counts() {
    let m = corpus(60, 9);
    let fit = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| ClassifierKind::Rf.fit(&m, 5).unwrap().to_json().unwrap())
    };
    assert_eq!(fit(1), fit(4));
}

#[test]
fn extracted_rows_equal_single_file_parses() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("min.dex"), common::minimal_dex()).unwrap();
    let smali = common::fixture_dir("smali");
    let mut paths = vec![dir.path().join("min.dex")];
    for name in ["Launcher.smali", "Sender.smali", "Table.smali"] {
        paths.push(smali.join(name));
    }
    paths.push(smali.clone());
    let manifest = LabelManifest {
        entries: paths
            .iter()
            .enumerate()
            .map(|(i, p)| ManifestEntry {
                app_id: format!("app{i}"),
                path: p.clone(),
                label: Label::from_bool(i % 2 == 0),
            })
            .collect(),
    };
    let ex = extract_corpus(&manifest).unwrap();
    assert!(ex.failures.is_empty());
    assert_eq!(ex.matrix.n_rows(), paths.len());
    for (i, p) in paths.iter().enumerate() {
        let (alone, _) = extract_path(p, "x").unwrap();
        let row: Vec<f64> = alone.counts().iter().map(|&c| c as f64).collect();
        assert_eq!(ex.matrix.row(i), &row[..], "{}", p.display());
        assert_eq!(ex.matrix.ids[i], format!("app{i}"));
    }
    // the directory row sums its three files
    let total: f64 = (1..4).map(|i| ex.matrix.row(i).iter().sum::<f64>()).sum();
    assert_eq!(ex.matrix.row(4).iter().sum::<f64>(), total);
}
