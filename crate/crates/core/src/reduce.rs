//! Feature reducers fitted on a training matrix: top-k variance column
//! selection, PCA, and (via [`crate::neural`]) autoencoder encoders.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{FeatureMatrix, Scale};
use crate::neural::Network;

pub const DEFAULT_VARIANCE_K: usize = 30;
pub const DEFAULT_PCA_COMPONENTS: usize = 15;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("reducer expects {expected} features, matrix has {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("asked for {requested} components, at most {max} available")]
    TooManyComponents { requested: usize, max: usize },
    #[error("unsupported reducer format version {0}")]
    UnsupportedVersion(u32),
    #[error("reducer document: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reducer {
    VarianceTopK {
        input_dim: usize,
        /// Selected column indices, highest variance first.
        columns: Vec<usize>,
        /// Sample variances of the selected columns.
        variances: Vec<f64>,
        warning: Option<String>,
    },
    Pca {
        mean: Vec<f64>,
        /// Per-column divisor when fitted with standardization.
        scale: Option<Vec<f64>>,
        /// `n_components × input_dim`, rows are unit eigenvectors.
        components: Array2<f64>,
        explained_variance: Vec<f64>,
    },
    Encoder {
        network: Network,
    },
}

#[derive(Serialize, Deserialize)]
struct Document {
    format_version: u32,
    reducer: Reducer,
}

fn sample_variance(col: ndarray::ArrayView1<'_, f64>) -> f64 {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Keeps the `k` columns with the largest sample variance. Ties go to the
/// lower column index.
pub fn fit_variance_top_k(matrix: &FeatureMatrix, k: usize) -> Result<Reducer, ReduceError> {
    if matrix.n_rows() < 2 {
        return Err(ReduceError::TooFewRows(matrix.n_rows()));
    }
    let d = matrix.n_features();
    if k > d {
        return Err(ReduceError::TooManyComponents { requested: k, max: d });
    }
    let all: Vec<f64> = matrix.data.columns().into_iter().map(sample_variance).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| all[b].total_cmp(&all[a]).then(a.cmp(&b)));
    order.truncate(k);
    let variances: Vec<f64> = order.iter().map(|&j| all[j]).collect();
    let zeros = variances.iter().filter(|&&v| v == 0.0).count();
    let warning =
        (zeros > 0).then(|| format!("{zeros} of {k} selected columns have zero variance; picked by lowest index"));
    Ok(Reducer::VarianceTopK {
        input_dim: d,
        columns: order,
        variances,
        warning,
    })
}

/// Centered PCA keeping the `n_components` leading eigenvectors of the
/// sample covariance.
pub fn fit_pca(matrix: &FeatureMatrix, n_components: usize) -> Result<Reducer, ReduceError> {
    fit_pca_with(matrix, n_components, false)
}

/// [`fit_pca`] with optional per-column standardization. Constant columns
/// keep a divisor of 1.
pub fn fit_pca_with(matrix: &FeatureMatrix, n_components: usize, standardize: bool) -> Result<Reducer, ReduceError> {
    let (n, d) = matrix.data.dim();
    if n < 2 {
        return Err(ReduceError::TooFewRows(n));
    }
    let max = n.min(d);
    if n_components > max {
        return Err(ReduceError::TooManyComponents {
            requested: n_components,
            max,
        });
    }
    let mean = matrix.data.mean_axis(Axis(0)).expect("non-empty");
    let mut centered = &matrix.data - &mean;
    let scale = standardize.then(|| {
        let sd: Array1<f64> = matrix
            .data
            .columns()
            .into_iter()
            .map(|c| {
                let s = sample_variance(c).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        centered /= &sd;
        sd.to_vec()
    });
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let cov = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Array2::zeros((n_components, d));
    let mut explained = Vec::with_capacity(n_components);
    for (r, &c) in order.iter().take(n_components).enumerate() {
        let v = eig.eigenvectors.column(c);
        // sign: largest-magnitude entry positive (first one on ties)
        let mut pivot = 0;
        for i in 1..d {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            components[[r, i]] = sign * v[i];
        }
        // round-off can leave tiny negatives on rank-deficient data
        explained.push(eig.eigenvalues[c].max(0.0));
    }
    Ok(Reducer::Pca {
        mean: mean.to_vec(),
        scale,
        components,
        explained_variance: explained,
    })
}

impl Reducer {
    pub fn input_dim(&self) -> usize {
        match self {
            Reducer::VarianceTopK { input_dim, .. } => *input_dim,
            Reducer::Pca { mean, .. } => mean.len(),
            Reducer::Encoder { network } => network.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Reducer::VarianceTopK { columns, .. } => columns.len(),
            Reducer::Pca { components, .. } => components.nrows(),
            Reducer::Encoder { network } => network.output_dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Reducer::VarianceTopK { .. } => "variance-top-k",
            Reducer::Pca { .. } => "pca",
            Reducer::Encoder { .. } => "encoder",
        }
    }

    pub fn warning(&self) -> Option<&str> {
        match self {
            Reducer::VarianceTopK { warning, .. } => warning.as_deref(),
            _ => None,
        }
    }

    /// Transforms raw values, without labels.
    pub fn transform(&self, data: &Array2<f64>) -> Result<Array2<f64>, ReduceError> {
        if data.ncols() != self.input_dim() {
            return Err(ReduceError::DimMismatch {
                expected: self.input_dim(),
                got: data.ncols(),
            });
        }
        Ok(match self {
            Reducer::VarianceTopK { columns, .. } => data.select(Axis(1), columns),
            Reducer::Pca {
                mean,
                scale,
                components,
                ..
            } => {
                let mut x = data - &Array1::from(mean.clone());
                if let Some(sd) = scale {
                    x /= &Array1::from(sd.clone());
                }
                x.dot(&components.t())
            }
            Reducer::Encoder { network } => network.forward(data),
        })
    }

    /// Reduced copy of `matrix`; ids and labels carry over.
    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix, ReduceError> {
        let data = self.transform(&matrix.data)?;
        let names = match self {
            Reducer::VarianceTopK { columns, .. } => columns.iter().map(|&j| matrix.feature_names[j].clone()).collect(),
            Reducer::Pca { .. } => (1..=data.ncols()).map(|i| format!("pc_{i:02}")).collect(),
            Reducer::Encoder { .. } => (1..=data.ncols()).map(|i| format!("code_{i:02}")).collect(),
        };
        Ok(matrix.with_data(data, names, Scale::Reduced))
    }

    pub fn to_json(&self) -> Result<String, ReduceError> {
        let doc = Document {
            format_version: FORMAT_VERSION,
            reducer: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ReduceError> {
        let doc: Document = serde_json::from_str(text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(ReduceError::UnsupportedVersion(doc.format_version));
        }
        Ok(doc.reducer)
    }

    pub fn save(&self, path: &Path) -> Result<(), ReduceError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ReduceError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn matrix(data: Array2<f64>) -> FeatureMatrix {
        let n = data.nrows();
        let d = data.ncols();
        FeatureMatrix::new(
            (0..n).map(|i| format!("r{i}")).collect(),
            (0..n).map(|i| Label::from_bool(i % 2 == 1)).collect(),
            data,
            (0..d).map(|j| format!("f{j}")).collect(),
            Scale::RowNormalized,
        )
        .unwrap()
    }

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::rng::seeded(seed);
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-3.0..3.0))
    }

    /// Cyclic Jacobi rotations; returns eigenvalues in descending order.
    fn jacobi_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[[i, j]].powi(2))
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[[p, q]].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[[k, p]];
                        let akq = a[[k, q]];
                        a[[k, p]] = c * akp - s * akq;
                        a[[k, q]] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[[p, k]];
                        let aqk = a[[q, k]];
                        a[[p, k]] = c * apk - s * aqk;
                        a[[q, k]] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    #[test]
    fn variance_picks_the_varying_columns() {
        let mut data = Array2::from_elem((6, 8), 1.0);
        for i in 0..6 {
            data[[i, 2]] = i as f64;
            data[[i, 5]] = (i * i) as f64;
            data[[i, 7]] = -(i as f64) * 0.5;
        }
        let r = fit_variance_top_k(&matrix(data), 3).unwrap();
        let Reducer::VarianceTopK { columns, warning, .. } = &r else {
            panic!()
        };
        let mut cols = columns.clone();
        cols.sort();
        assert_eq!(cols, vec![2, 5, 7]);
        assert!(warning.is_none());
    }

    #[test]
    fn constant_matrix_takes_lowest_columns_and_warns() {
        let r = fit_variance_top_k(&matrix(Array2::from_elem((4, 10), 2.0)), 3).unwrap();
        let Reducer::VarianceTopK { columns, .. } = &r else {
            panic!()
        };
        assert_eq!(columns, &vec![0, 1, 2]);
        assert!(r.warning().is_some());
    }

    #[test]
    fn variance_needs_two_rows() {
        let m = matrix(Array2::zeros((1, 4)));
        assert!(matches!(fit_variance_top_k(&m, 2), Err(ReduceError::TooFewRows(1))));
        assert!(matches!(fit_pca(&m, 1), Err(ReduceError::TooFewRows(1))));
    }

    #[test]
    fn collinear_points() {
        let data = ndarray::array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let r = fit_pca(&matrix(data), 2).unwrap();
        let Reducer::Pca {
            components,
            explained_variance,
            ..
        } = &r
        else {
            panic!()
        };
        let h = 1.0 / 2f64.sqrt();
        assert!((components[[0, 0]] - h).abs() < 1e-12);
        assert!((components[[0, 1]] - h).abs() < 1e-12);
        assert!((explained_variance[0] - 2.0).abs() < 1e-12);
        assert!(explained_variance[1].abs() < 1e-12);
    }

    #[test]
    fn full_rank_reconstruction() {
        let data = random(6, 4, 3);
        let r = fit_pca(&matrix(data.clone()), 4).unwrap();
        let scores = r.transform(&data).unwrap();
        let Reducer::Pca { mean, components, .. } = &r else {
            panic!()
        };
        let back = scores.dot(components) + &Array1::from(mean.clone());
        for (a, b) in back.iter().zip(&data) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn explained_variance_matches_jacobi() {
        let data = random(5, 4, 11);
        let r = fit_pca(&matrix(data.clone()), 4).unwrap();
        let Reducer::Pca { explained_variance, .. } = &r else {
            panic!()
        };
        let mean = data.mean_axis(Axis(0)).unwrap();
        let c = &data - &mean;
        let cov = c.t().dot(&c) / 4.0;
        let oracle = jacobi_eigenvalues(cov);
        for (a, b) in explained_variance.iter().zip(&oracle) {
            assert!((a - b.max(0.0)).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn components_are_orthonormal_with_positive_pivot() {
        let data = random(20, 6, 5);
        let r = fit_pca(&matrix(data), 5).unwrap();
        let Reducer::Pca { components, .. } = &r else { panic!() };
        let gram = components.dot(&components.t());
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-8);
            }
            let row = components.row(i);
            let pivot = row
                .iter()
                .cloned()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn standardized_pca_ignores_column_scale() {
        let data = random(12, 3, 8);
        let mut stretched = data.clone();
        stretched.column_mut(1).mapv_inplace(|v| v * 1000.0);
        let a = fit_pca_with(&matrix(data.clone()), 2, true).unwrap();
        let b = fit_pca_with(&matrix(stretched.clone()), 2, true).unwrap();
        let sa = a.transform(&data).unwrap();
        let sb = b.transform(&stretched).unwrap();
        for (x, y) in sa.iter().zip(&sb) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn apply_checks_width_and_keeps_rows() {
        let m = matrix(random(20, 256, 1));
        let vt = fit_variance_top_k(&m, DEFAULT_VARIANCE_K).unwrap();
        let out = vt.apply(&m).unwrap();
        assert_eq!(out.n_features(), 30);
        assert_eq!(out.ids, m.ids);
        assert_eq!(out.labels, m.labels);
        assert_eq!(out.scale, Scale::Reduced);
        let pca = fit_pca(&m, DEFAULT_PCA_COMPONENTS).unwrap();
        assert_eq!(pca.apply(&m).unwrap().n_features(), 15);
        let narrow = out;
        assert!(matches!(
            vt.apply(&narrow),
            Err(ReduceError::DimMismatch { expected: 256, got: 30 })
        ));
    }

    #[test]
    fn too_many_components() {
        let m = matrix(random(3, 5, 2));
        assert!(matches!(
            fit_pca(&m, 4),
            Err(ReduceError::TooManyComponents { requested: 4, max: 3 })
        ));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let data = random(15, 7, 4);
        let m = matrix(data.clone());
        for r in [fit_pca(&m, 3).unwrap(), fit_variance_top_k(&m, 4).unwrap()] {
            let back = Reducer::from_json(&r.to_json().unwrap()).unwrap();
            assert_eq!(back, r);
            assert_eq!(back.transform(&data).unwrap(), r.transform(&data).unwrap());
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let text = r#"{"format_version": 9, "reducer": {"kind": "encoder", "network": {"layers": []}}}"#;
        assert!(matches!(
            Reducer::from_json(text),
            Err(ReduceError::UnsupportedVersion(9))
        ));
    }

    fn small_matrix() -> impl Strategy<Value = Array2<f64>> {
        (3usize..12, 2usize..6).prop_flat_map(|(n, d)| {
            proptest::collection::vec(-50.0f64..50.0, n * d)
                .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn scores_are_centered(data in small_matrix()) {
            let k = data.nrows().min(data.ncols());
            let r = fit_pca(&matrix(data.clone()), k).unwrap();
            let scores = r.transform(&data).unwrap();
            for m in scores.mean_axis(Axis(0)).unwrap() {
                prop_assert!(m.abs() < 1e-9);
            }
        }

        #[test]
        fn explained_variance_non_increasing(data in small_matrix()) {
            let k = data.nrows().min(data.ncols());
            let r = fit_pca(&matrix(data), k).unwrap();
            let Reducer::Pca { explained_variance, .. } = &r else { unreachable!() };
            for w in explained_variance.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }

        #[test]
        fn full_pca_preserves_distances(data in small_matrix()) {
            let d = data.ncols();
            prop_assume!(data.nrows() >= d);
            let r = fit_pca(&matrix(data.clone()), d).unwrap();
            let s = r.transform(&data).unwrap();
            for i in 0..data.nrows() {
                for j in 0..i {
                    let a = (&data.row(i) - &data.row(j)).mapv(|v| v * v).sum().sqrt();
                    let b = (&s.row(i) - &s.row(j)).mapv(|v| v * v).sum().sqrt();
                    prop_assert!((a - b).abs() < 1e-8 * (1.0 + a));
                }
            }
        }

        #[test]
        fn variance_selection_ignores_row_order(data in small_matrix(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut order: Vec<usize> = (0..data.nrows()).collect();
            order.shuffle(&mut crate::rng::seeded(seed));
            let shuffled = data.select(Axis(0), &order);
            let k = data.ncols() / 2 + 1;
            let a = fit_variance_top_k(&matrix(data), k).unwrap();
            let b = fit_variance_top_k(&matrix(shuffled), k).unwrap();
            let (Reducer::VarianceTopK { columns: ca, .. }, Reducer::VarianceTopK { columns: cb, .. }) = (&a, &b) else { unreachable!() };
            prop_assert_eq!(ca, cb);
        }
    }
}
