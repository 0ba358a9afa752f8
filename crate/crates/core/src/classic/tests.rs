use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng as _;

use super::tree::gini;
use super::*;
use crate::corpus::Scale;

fn matrix(data: Array2<f64>, malware: &[bool]) -> FeatureMatrix {
    let (n, d) = data.dim();
    FeatureMatrix::new(
        (0..n).map(|i| format!("r{i}")).collect(),
        malware.iter().map(|&m| Label::from_bool(m)).collect(),
        data,
        (0..d).map(|j| format!("f{j}")).collect(),
        Scale::Reduced,
    )
    .unwrap()
}

fn accuracy(model: &Model, m: &FeatureMatrix) -> f64 {
    let hits = model
        .predict_rows(&m.data)
        .iter()
        .zip(&m.labels)
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / m.n_rows() as f64
}

/// Two noisy Gaussian blobs.
fn blobs(n: usize, d: usize, gap: f64, seed: u64) -> FeatureMatrix {
    let mut rng = crate::rng::seeded(seed);
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 1).collect();
    let data = Array2::from_shape_fn((n, d), |(i, j)| {
        let shift = if labels[i] && j < 2 { gap } else { 0.0 };
        shift + rng.random_range(-1.0..1.0)
    });
    matrix(data, &labels)
}

#[test]
fn gini_values() {
    assert_eq!(gini([5.0, 5.0]), 0.5);
    assert_eq!(gini([0.0, 7.0]), 0.0);
    assert_eq!(gini([3.0, 0.0]), 0.0);
}

#[test]
fn tree_split_matches_exhaustive_enumeration() {
    let m = matrix(array![[0.0], [1.0], [10.0]], &[false, false, true]);
    // enumerate every midpoint and keep the purest
    let xs = [0.0, 1.0, 10.0];
    let ys = [false, false, true];
    let mut oracle = (f64::INFINITY, 0.0);
    for w in xs.windows(2) {
        let t = (w[0] + w[1]) / 2.0;
        let mut l = [0.0; 2];
        let mut r = [0.0; 2];
        for (x, y) in xs.iter().zip(ys) {
            if *x <= t {
                l[y as usize] += 1.0;
            } else {
                r[y as usize] += 1.0;
            }
        }
        let cost = (l[0] + l[1]) * gini(l) + (r[0] + r[1]) * gini(r);
        if cost < oracle.0 {
            oracle = (cost, t);
        }
    }
    let tree = train_dt(&m).unwrap();
    let TreeNode::Split { feature, threshold, .. } = tree.nodes[0] else {
        panic!()
    };
    assert_eq!((feature, threshold), (0, oracle.1));
    assert_eq!(tree.n_leaves(), 2);
    assert_eq!(accuracy(&Model::Dt(tree), &m), 1.0);
}

#[test]
fn single_class_tree_is_a_leaf() {
    let m = matrix(array![[0.0, 1.0], [3.0, 2.0]], &[true, true]);
    let tree = train_dt(&m).unwrap();
    assert_eq!(tree.nodes, vec![TreeNode::Leaf { counts: [0.0, 2.0] }]);
    assert_eq!(tree.score(&[9.0, 9.0]), 1.0);
}

#[test]
fn tree_tie_prefers_lower_feature() {
    // both columns separate the classes identically
    let m = matrix(array![[0.0, 0.0], [1.0, 1.0]], &[false, true]);
    let tree = train_dt(&m).unwrap();
    assert!(matches!(tree.nodes[0], TreeNode::Split { feature: 0, threshold, .. } if threshold == 0.5));
}

#[test]
fn degenerate_forest_equals_tree() {
    let m = blobs(60, 5, 0.8, 3);
    let dt = train_dt(&m).unwrap();
    let params = ForestParams {
        n_trees: 1,
        bootstrap: false,
        max_features: Some(5),
        seed: 1,
    };
    let rf = train_rf(&m, params).unwrap();
    assert_eq!(rf.trees[0], dt);
}

#[test]
fn forest_is_reproducible_across_thread_counts() {
    let m = blobs(80, 9, 1.0, 5);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                train_rf(
                    &m,
                    ForestParams {
                        n_trees: 20,
                        ..ForestParams::new(11)
                    },
                )
                .unwrap()
            })
    };
    let a = run(1);
    assert_eq!(a, run(4));
    let scores = Model::Rf(a).score_rows(&m.data);
    assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
}

#[test]
fn forest_skips_constant_features() {
    // only column 3 carries signal; the rest are constant
    let mut data = Array2::zeros((20, 4));
    let labels: Vec<bool> = (0..20).map(|i| i >= 10).collect();
    for i in 0..20 {
        data[[i, 3]] = i as f64;
    }
    let m = matrix(data, &labels);
    let params = ForestParams {
        n_trees: 5,
        bootstrap: false,
        max_features: Some(1),
        seed: 2,
    };
    let rf = train_rf(&m, params).unwrap();
    assert_eq!(accuracy(&Model::Rf(rf), &m), 1.0);
}

#[test]
fn knn_examples() {
    let m = matrix(array![[0.0], [10.0]], &[false, true]);
    let knn = train_knn(&m, 1).unwrap();
    assert_eq!(Model::Knn(knn.clone()).predict(&[1.0]), Label::Benign);
    assert_eq!(Model::Knn(knn).predict(&[10.0]), Label::Malware);
    assert!(matches!(
        train_knn(&m, 5),
        Err(ClassicError::TooFewRows { needed: 5, got: 2 })
    ));
}

#[test]
fn knn_matches_all_pairs_scan() {
    let m = blobs(30, 3, 0.5, 8);
    let knn = train_knn(&m, 5).unwrap();
    for q in 0..m.n_rows() {
        let query = m.row(q);
        let mut all: Vec<(f64, usize)> = (0..m.n_rows())
            .map(|i| {
                let d: f64 = m
                    .row(i)
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (d, i)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<usize> = all[..5].iter().map(|p| p.1).collect();
        assert_eq!(knn.neighbors(query), want);
    }
}

#[test]
fn knn_distance_ties_go_to_lower_index() {
    let m = matrix(array![[1.0], [-1.0], [1.0]], &[true, false, false]);
    let knn = train_knn(&m, 1).unwrap();
    assert_eq!(knn.neighbors(&[0.0]), vec![0]);
    assert_eq!(knn.neighbors(&[1.0]), vec![0]);
}

#[test]
fn svm_separable_and_scale_invariant_predictions() {
    let m = matrix(array![[0.0, 0.0], [2.0, 2.0]], &[false, true]);
    let svm = train_svm_linear(&m, SvmParams::new(0)).unwrap();
    assert!(svm.warning.is_none());
    assert_eq!(accuracy(&Model::Svm(svm), &m), 1.0);

    let base = blobs(60, 3, 4.0, 2);
    let doubled = base.with_data(&base.data * 2.0, base.feature_names.clone(), Scale::Reduced);
    let a = Model::Svm(train_svm_linear(&base, SvmParams::new(4)).unwrap());
    let b = Model::Svm(train_svm_linear(&doubled, SvmParams::new(4)).unwrap());
    assert_eq!(a.predict_rows(&base.data), b.predict_rows(&doubled.data));
}

#[test]
fn svm_beats_zero_vector_objective() {
    let m = blobs(50, 4, 0.3, 6);
    let svm = train_svm_linear(&m, SvmParams::new(1)).unwrap();
    let zero_objective = m.n_rows() as f64;
    assert!(svm.objective(&m) <= zero_objective);
}

#[test]
fn svm_iteration_cap_returns_best_with_warning() {
    let m = blobs(50, 4, 0.3, 6);
    let svm = train_svm_linear(
        &m,
        SvmParams {
            max_iter: 1,
            tol: 0.0,
            ..SvmParams::new(1)
        },
    )
    .unwrap();
    assert!(svm.warning.is_some());
    assert_eq!(svm.iterations, 1);
}

#[test]
fn single_class_errors() {
    let m = matrix(array![[0.0], [1.0]], &[false, false]);
    assert!(matches!(
        train_svm_linear(&m, SvmParams::new(0)),
        Err(ClassicError::SingleClass)
    ));
    assert!(matches!(
        train_adaboost(&m, BoostParams::new(0)),
        Err(ClassicError::SingleClass)
    ));
}

#[test]
fn boosting_a_perfect_stump() {
    let m = matrix(
        array![[0.0], [1.0], [2.0], [5.0], [6.0]],
        &[false, false, false, true, true],
    );
    let ada = train_adaboost(&m, BoostParams::new(0)).unwrap();
    assert!(ada.round_errors[0] < 1e-12);
    assert!(ada.clipped_rounds > 0);
    assert_eq!(accuracy(&Model::AdaBoost(ada), &m), 1.0);
}

#[test]
fn one_round_follows_its_stump() {
    let m = blobs(40, 3, 1.5, 9);
    let ada = train_adaboost(
        &m,
        BoostParams {
            n_estimators: 1,
            ..BoostParams::new(0)
        },
    )
    .unwrap();
    let stump = &ada.stumps[0];
    let model = Model::AdaBoost(ada.clone());
    for row in m.rows() {
        let by_stump = Label::from_bool(stump.half_logit(row) >= 0.0);
        assert_eq!(model.predict(row), by_stump);
    }
}

#[test]
fn boosting_beats_the_best_single_stump() {
    // malware only in the upper-right quadrant of a 6x6 grid
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for a in 0..6 {
        for b in 0..6 {
            rows.extend([a as f64, b as f64]);
            labels.push(a >= 3 && b >= 3);
        }
    }
    let m = matrix(Array2::from_shape_vec((36, 2), rows).unwrap(), &labels);

    // exhaustive stump oracle: every feature, threshold and orientation
    let mut ceiling: f64 = 0.0;
    for f in 0..2 {
        for t in -1..6 {
            let t = t as f64 + 0.5;
            for flip in [false, true] {
                let hits = m
                    .rows()
                    .zip(&labels)
                    .filter(|(r, &y)| ((r[f] > t) != flip) == y)
                    .count();
                ceiling = ceiling.max(hits as f64 / 36.0);
            }
        }
    }
    assert!(ceiling <= 0.75 + 1e-12);

    let ada = train_adaboost(&m, BoostParams::new(0)).unwrap();
    assert!(accuracy(&Model::AdaBoost(ada), &m) >= 0.9);
}

#[test]
fn every_model_thresholds_its_score_and_round_trips() {
    let m = blobs(40, 4, 1.0, 12);
    for kind in [
        ClassifierKind::Dt,
        ClassifierKind::Knn,
        ClassifierKind::Svm,
        ClassifierKind::Rf,
        ClassifierKind::AdaBoost,
    ] {
        let model = kind.fit(&m, 3).unwrap();
        let scores = model.score_rows(&m.data);
        for (row, s) in m.rows().zip(&scores) {
            assert_eq!(model.predict(row), Label::from_bool(*s >= model.threshold()));
            assert_eq!(model.score(row), *s);
        }
        let back = Model::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back.score_rows(&m.data), scores, "{kind}");
    }
}

#[test]
fn dnn_model_round_trip() {
    let m = blobs(40, 4, 2.0, 1);
    let spec = crate::neural::DnnVariant::Dnn2L.spec(4, 5);
    let spec = crate::neural::MlpSpec { epochs: 3, ..spec };
    let model = Model::Dnn(crate::neural::train_dnn_with(&m, &spec).unwrap());
    let back = Model::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back.score_rows(&m.data), model.score_rows(&m.data));
    assert_eq!(back.kind(), "dnn");
}

#[test]
fn classifier_names_parse() {
    for k in ClassifierKind::ALL {
        assert_eq!(k.name().to_lowercase().parse::<ClassifierKind>().unwrap(), k);
    }
    assert!("svm-rbf".parse::<ClassifierKind>().is_err());
}

fn labelled_rows() -> impl Strategy<Value = (Array2<f64>, Vec<bool>)> {
    (4usize..30, 1usize..4).prop_flat_map(|(n, d)| {
        (
            proptest::collection::vec(-100i32..100, n * d),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(v, y)| {
                let data = Array2::from_shape_vec((n, d), v.into_iter().map(f64::from).collect()).unwrap();
                (data, y)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_fits_consistent_data((data, y) in labelled_rows()) {
        // drop duplicate rows so labels are consistent
        let mut seen = std::collections::HashSet::new();
        let keep: Vec<usize> = (0..data.nrows())
            .filter(|&i| seen.insert(data.row(i).iter().map(|v| *v as i64).collect::<Vec<_>>()))
            .collect();
        let m = matrix(data.select(ndarray::Axis(0), &keep), &keep.iter().map(|&i| y[i]).collect::<Vec<_>>());
        let tree = Model::Dt(train_dt(&m).unwrap());
        prop_assert_eq!(accuracy(&tree, &m), 1.0);
    }

    #[test]
    fn stump_errors_never_exceed_half((data, y) in labelled_rows()) {
        prop_assume!(y.iter().any(|&v| v) && y.iter().any(|&v| !v));
        let m = matrix(data, &y);
        let ada = train_adaboost(&m, BoostParams { n_estimators: 10, ..BoostParams::new(0) }).unwrap();
        for e in ada.round_errors {
            prop_assert!(e <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn knn_ignores_row_order(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let m = blobs(25, 3, 0.7, seed);
        let mut order: Vec<usize> = (0..25).collect();
        order.shuffle(&mut crate::rng::seeded(seed ^ 1));
        let shuffled = m.select_rows(&order);
        let a = Model::Knn(train_knn(&m, 5).unwrap());
        let b = Model::Knn(train_knn(&shuffled, 5).unwrap());
        let probe = blobs(10, 3, 0.7, seed ^ 2);
        prop_assert_eq!(a.score_rows(&probe.data), b.score_rows(&probe.data));
    }
}
