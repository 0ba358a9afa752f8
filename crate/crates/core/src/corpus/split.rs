use rand::seq::SliceRandom;

use super::{CorpusError, FeatureMatrix};
use crate::rng::seeded;

/// Disjoint train/test partition of a parent matrix.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    /// Parent row indices, ascending.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

/// Seeded train/test split. With `stratified`, each class contributes
/// `round(ratio * n_class)` rows to train. Rows keep their parent order.
pub fn split(matrix: &FeatureMatrix, ratio: f64, seed: u64, stratified: bool) -> Result<SplitPair, CorpusError> {
    let n = matrix.n_rows();
    if n < 2 {
        return Err(CorpusError::TooFewRows(format!("{n} rows, need at least 2")));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(CorpusError::TooFewRows(format!("ratio {ratio} outside [0, 1]")));
    }
    let mut rng = seeded(seed);

    let groups: Vec<Vec<usize>> = if stratified {
        let (benign, malware): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| !matrix.labels[i].is_malware());
        vec![benign, malware]
    } else {
        vec![(0..n).collect()]
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut group in groups {
        group.shuffle(&mut rng);
        let k = (ratio * group.len() as f64).round() as usize;
        train.extend_from_slice(&group[..k]);
        test.extend_from_slice(&group[k..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(CorpusError::TooFewRows(format!(
            "ratio {ratio} leaves {} train / {} test rows",
            train.len(),
            test.len()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPair {
        train: matrix.select_rows(&train),
        test: matrix.select_rows(&test),
        train_indices: train,
        test_indices: test,
        seed,
        ratio,
    })
}
