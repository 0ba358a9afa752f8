use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ClassicError;
use crate::corpus::FeatureMatrix;
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl SvmParams {
    pub fn new(seed: u64) -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-3,
            max_iter: 1000,
            seed,
        }
    }
}

/// Soft-margin linear SVM, `score = w·x + b`, malware when `score ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub params: SvmParams,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Set when the iteration cap was hit before the tolerance.
    pub warning: Option<String>,
}

impl LinearSvm {
    pub fn score(&self, row: &[f64]) -> f64 {
        self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    /// `½‖(w, b)‖² + C·Σ max(0, 1 − y·score)` with y ∈ {−1, +1}.
    pub fn objective(&self, train: &FeatureMatrix) -> f64 {
        primal(&self.weights, self.bias, train, self.params.c)
    }
}

fn primal(w: &[f64], b: f64, train: &FeatureMatrix, c: f64) -> f64 {
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
    let hinge: f64 = train
        .rows()
        .zip(&train.labels)
        .map(|(x, l)| {
            let y = if l.is_malware() { 1.0 } else { -1.0 };
            let s: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b;
            (1.0 - y * s).max(0.0)
        })
        .sum();
    reg + c * hinge
}

/// Dual coordinate descent on the hinge-loss SVM. The bias is learned as
/// the weight of a constant 1 feature, so it is regularized too. Stops when
/// the spread of projected gradients falls below `tol`; otherwise returns
/// the lowest-objective iterate seen, with a warning.
pub fn train_svm_linear(train: &FeatureMatrix, params: SvmParams) -> Result<LinearSvm, ClassicError> {
    let (benign, malware) = train.class_counts();
    if benign == 0 || malware == 0 {
        return Err(ClassicError::SingleClass);
    }
    let n = train.n_rows();
    let d = train.n_features();
    let y: Vec<f64> = train
        .labels
        .iter()
        .map(|l| if l.is_malware() { 1.0 } else { -1.0 })
        .collect();
    let qd: Vec<f64> = train
        .rows()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let c = params.c;

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (primal(&w, b, train, c), w.clone(), b);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded(params.seed);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let x = train.row(i);
            let g = y[i] * (w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * y[i];
                for (w, x) in w.iter_mut().zip(x) {
                    *w += delta * x;
                }
                b += delta;
            }
        }
        let obj = primal(&w, b, train, c);
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
        if pg_max - pg_min < params.tol {
            converged = true;
            break;
        }
    }

    let (weights, bias, warning) = if converged {
        (w, b, None)
    } else {
        (
            best.1,
            best.2,
            Some(format!(
                "no convergence after {iterations} passes; returning best iterate"
            )),
        )
    };
    Ok(LinearSvm {
        params,
        weights,
        bias,
        iterations,
        warning,
    })
}
