use ndarray::{Array1, Array2, Axis};

use super::kmeans::{kmeans, DEFAULT_MAX_ITER};
use super::{Algorithm, ClusterError, ClusteringResult, Detail};

pub const DEFAULT_GMM_MAX_ITER: usize = 200;
pub const DEFAULT_REG: f64 = 1e-6;
/// Stop once the mean per-point log-likelihood gains less than this.
const TOL: f64 = 1e-8;

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

struct Params {
    weights: Vec<f64>,
    means: Array2<f64>,
    vars: Array2<f64>,
}

/// Per-point, per-component log of `weight · N(x | mean, diag(var))`.
fn log_joint(data: &Array2<f64>, p: &Params) -> Array2<f64> {
    let (n, d) = data.dim();
    let k = p.weights.len();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let consts: Vec<f64> = (0..k)
        .map(|c| {
            let log_det: f64 = p.vars.row(c).iter().map(|v| v.ln()).sum();
            p.weights[c].ln() - 0.5 * (d as f64 * ln2pi + log_det)
        })
        .collect();
    Array2::from_shape_fn((n, k), |(i, c)| {
        let x = data.row(i);
        let q: f64 = x
            .iter()
            .zip(p.means.row(c))
            .zip(p.vars.row(c))
            .map(|((x, m), v)| (x - m).powi(2) / v)
            .sum();
        consts[c] - 0.5 * q
    })
}

/// M-step with the variance floor. Returns the names of floored parts.
fn m_step(data: &Array2<f64>, resp: &Array2<f64>, p: &mut Params, reg: f64) -> Vec<String> {
    let (n, d) = data.dim();
    let mut warnings = Vec::new();
    for c in 0..p.weights.len() {
        let r = resp.column(c);
        let nk: f64 = r.sum();
        if nk <= f64::MIN_POSITIVE {
            p.weights[c] = 0.0;
            warnings.push(format!("component {c} lost all responsibility"));
            continue;
        }
        p.weights[c] = nk / n as f64;
        let mean: Array1<f64> = data.t().dot(&r) / nk;
        let mut floored = false;
        for j in 0..d {
            let s: f64 = data
                .column(j)
                .iter()
                .zip(r)
                .map(|(x, w)| w * (x - mean[j]).powi(2))
                .sum::<f64>()
                / nk;
            // max(S, reg) is the constrained maximizer, so EM stays monotone
            if s < reg {
                floored = true;
            }
            p.vars[[c, j]] = s.max(reg);
        }
        p.means.row_mut(c).assign(&mean);
        if floored {
            warnings.push(format!("component {c} hit the variance floor"));
        }
    }
    warnings
}

/// Diagonal-covariance Gaussian mixture fitted by EM from a k-means start.
pub fn gmm(
    data: &Array2<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    reg: f64,
) -> Result<ClusteringResult, ClusterError> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    if !(reg > 0.0) {
        return Err(ClusterError::InvalidParams("variance floor must be positive".into()));
    }
    let d = data.ncols();
    let init = kmeans(data, k, seed, DEFAULT_MAX_ITER)?;
    let mut resp = Array2::zeros((n, k));
    for (i, &c) in init.assignment.iter().enumerate() {
        resp[[i, c as usize]] = 1.0;
    }
    let mut p = Params {
        weights: vec![0.0; k],
        means: Array2::zeros((k, d)),
        vars: Array2::from_elem((k, d), 1.0),
    };
    let mut warnings = m_step(data, &resp, &mut p, reg);

    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let lj = log_joint(data, &p);
        let mut ll = 0.0;
        for (i, row) in lj.rows().into_iter().enumerate() {
            let lse = log_sum_exp(row.as_slice().unwrap());
            ll += lse;
            for c in 0..k {
                resp[[i, c]] = (row[c] - lse).exp();
            }
        }
        let mean_ll = ll / n as f64;
        let done = history.last().is_some_and(|&prev: &f64| (mean_ll - prev).abs() < TOL);
        history.push(mean_ll);
        if done {
            converged = true;
            break;
        }
        warnings.extend(m_step(data, &resp, &mut p, reg));
    }
    warnings.sort();
    warnings.dedup();
    if !converged {
        warnings.push(format!("EM did not converge in {max_iter} iterations"));
    }

    let assignment = resp
        .axis_iter(Axis(0))
        .map(|r| {
            let mut best = 0;
            for c in 1..k {
                if r[c] > r[best] {
                    best = c;
                }
            }
            best as i32
        })
        .collect();
    Ok(ClusteringResult {
        algorithm: Algorithm::Gmm,
        k,
        assignment,
        centroids: Some(p.means.clone()),
        seed: Some(seed),
        warnings,
        detail: Detail::Gmm {
            weights: p.weights,
            variances: p.vars,
            loglik_history: history,
        },
    })
}
