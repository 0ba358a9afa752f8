use serde::{Deserialize, Serialize};

use super::tree::scan_sorted;
use super::ClassicError;
use crate::corpus::FeatureMatrix;

const PROB_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    /// Recorded only; stump fitting is deterministic.
    pub seed: u64,
}

impl BoostParams {
    pub fn new(seed: u64) -> Self {
        BoostParams {
            n_estimators: 100,
            learning_rate: 1.0,
            seed,
        }
    }
}

/// Depth-1 tree carrying weighted class probabilities per side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    /// `None` when no feature could be split: both sides share `left`.
    pub feature: Option<usize>,
    pub threshold: f64,
    /// Clipped (benign, malware) probabilities.
    pub left: [f64; 2],
    pub right: [f64; 2],
}

impl Stump {
    fn probs(&self, row: &[f64]) -> [f64; 2] {
        match self.feature {
            Some(f) if row[f] > self.threshold => self.right,
            _ => self.left,
        }
    }

    /// Half log-odds of malware.
    pub fn half_logit(&self, row: &[f64]) -> f64 {
        let p = self.probs(row);
        0.5 * (p[1].ln() - p[0].ln())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub params: BoostParams,
    pub stumps: Vec<Stump>,
    /// Weighted training error of each round's stump, on that round's weights.
    pub round_errors: Vec<f64>,
    /// Rounds where a stump side had a zero-weight class and was clipped.
    pub clipped_rounds: usize,
}

impl AdaBoost {
    /// Additive half-logit `F(x)`.
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.params.learning_rate * self.stumps.iter().map(|s| s.half_logit(row)).sum::<f64>()
    }

    /// Malware probability `1 / (1 + e^{-2F})`.
    pub fn score(&self, row: &[f64]) -> f64 {
        crate::neural::sigmoid(2.0 * self.decision(row))
    }
}

fn clipped(counts: [f64; 2]) -> ([f64; 2], bool) {
    let total = counts[0] + counts[1];
    let p = [counts[0] / total, counts[1] / total];
    let hit = p[0] < PROB_FLOOR || p[1] < PROB_FLOOR;
    ([p[0].max(PROB_FLOOR), p[1].max(PROB_FLOOR)], hit)
}

/// SAMME.R boosting of Gini stumps.
pub fn train_adaboost(train: &FeatureMatrix, params: BoostParams) -> Result<AdaBoost, ClassicError> {
    let (benign, malware) = train.class_counts();
    if benign == 0 || malware == 0 {
        return Err(ClassicError::SingleClass);
    }
    if params.n_estimators == 0 || !(params.learning_rate > 0.0) {
        return Err(ClassicError::InvalidParams(
            "need ≥1 estimator and a positive learning rate".into(),
        ));
    }
    let n = train.n_rows();
    let d = train.n_features();
    let y = train.targets();
    let presorted: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| train.data[[a, f]].total_cmp(&train.data[[b, f]]));
            idx
        })
        .collect();
    let constant: Vec<bool> = presorted
        .iter()
        .enumerate()
        .map(|(f, idx)| train.data[[idx[0], f]] == train.data[[idx[n - 1], f]])
        .collect();

    let mut w = vec![1.0 / n as f64; n];
    let mut stumps = Vec::with_capacity(params.n_estimators);
    let mut round_errors = Vec::with_capacity(params.n_estimators);
    let mut clipped_rounds = 0;
    let mut triples = Vec::with_capacity(n);

    for _ in 0..params.n_estimators {
        let mut total = [0.0; 2];
        for i in 0..n {
            total[y[i] as usize] += w[i];
        }
        let mut best: Option<super::tree::Cut> = None;
        for f in (0..d).filter(|&f| !constant[f]) {
            triples.clear();
            triples.extend(presorted[f].iter().map(|&i| (train.data[[i, f]], y[i], w[i])));
            if let Some(cut) = scan_sorted(f, &triples, total) {
                if best.is_none_or(|b| cut.cost < b.cost) {
                    best = Some(cut);
                }
            }
        }
        let stump = match best {
            Some(cut) => {
                let (left, hl) = clipped(cut.left);
                let (right, hr) = clipped(cut.right);
                if hl || hr {
                    clipped_rounds += 1;
                }
                Stump {
                    feature: Some(cut.feature),
                    threshold: cut.threshold,
                    left,
                    right,
                }
            }
            None => {
                let (p, hit) = clipped(total);
                if hit {
                    clipped_rounds += 1;
                }
                Stump {
                    feature: None,
                    threshold: 0.0,
                    left: p,
                    right: p,
                }
            }
        };

        let mut err = 0.0;
        let mut sum = 0.0;
        for i in 0..n {
            let x = train.row(i);
            let p = stump.probs(x);
            if (p[1] > p[0]) != y[i] {
                err += w[i];
            }
            let sign = if y[i] { 1.0 } else { -1.0 };
            w[i] *= (-params.learning_rate * sign * stump.half_logit(x)).exp();
            sum += w[i];
        }
        round_errors.push(err / (total[0] + total[1]));
        stumps.push(stump);
        if !(sum.is_finite() && sum > 0.0) {
            break;
        }
        for v in &mut w {
            *v /= sum;
        }
    }

    Ok(AdaBoost {
        params,
        stumps,
        round_errors,
        clipped_rounds,
    })
}
