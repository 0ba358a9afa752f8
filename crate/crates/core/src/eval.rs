//! Confusion-matrix metrics, ROC AUC, timed train/test runs and the report
//! table in CSV, JSON and markdown.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classic::{ClassifierKind, Model};
use crate::corpus::{FeatureMatrix, Label};

pub const REPORT_HEADER: &str =
    "feature_reduction,n_features,classifier,accuracy,tpr,tnr,auc,f1,train_time_sec,test_time_sec";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{truth} labels but {other} predictions or scores")]
    LengthMismatch { truth: usize, other: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("AUC needs both classes in the truth labels")]
    SingleClass,
    #[error("report line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Counts with malware as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

pub fn confusion(truth: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            other: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyMatrix);
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(predicted) {
        match (t.is_malware(), p.is_malware()) {
            (true, true) => cm.true_pos += 1,
            (true, false) => cm.false_neg += 1,
            (false, false) => cm.true_neg += 1,
            (false, true) => cm.false_pos += 1,
        }
    }
    Ok(cm)
}

/// Which ratios had a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degenerate {
    pub tpr: bool,
    pub tnr: bool,
    pub precision: bool,
    pub f1: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.tpr || self.tnr || self.precision || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Recall on malware.
    pub tpr: f64,
    /// Recall on benign.
    pub tnr: f64,
    pub precision: f64,
    /// Harmonic mean of precision and recall.
    pub f1: f64,
    /// `2·TP / (2·TP + FP + FN)`; equal to `f1` up to rounding.
    pub f1_counts: f64,
    pub degenerate: Degenerate,
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let mut deg = Degenerate::default();
    let accuracy = (cm.true_pos + cm.true_neg) as f64 / total as f64;
    let tpr = ratio(cm.true_pos, cm.true_pos + cm.false_neg, &mut deg.tpr);
    let tnr = ratio(cm.true_neg, cm.true_neg + cm.false_pos, &mut deg.tnr);
    let precision = ratio(cm.true_pos, cm.true_pos + cm.false_pos, &mut deg.precision);
    let f1 = if precision + tpr > 0.0 {
        2.0 * precision * tpr / (precision + tpr)
    } else {
        deg.f1 = true;
        0.0
    };
    let mut unused = false;
    let f1_counts = ratio(
        2 * cm.true_pos,
        2 * cm.true_pos + cm.false_pos + cm.false_neg,
        &mut unused,
    );
    Ok(Metrics {
        accuracy,
        tpr,
        tnr,
        precision,
        f1,
        f1_counts,
        degenerate: deg,
    })
}

/// Area under the ROC curve as the Mann-Whitney statistic: the chance a
/// malware row outscores a benign one, ties counting one half.
pub fn roc_auc(truth: &[Label], scores: &[f64]) -> Result<f64, EvalError> {
    if truth.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            other: scores.len(),
        });
    }
    let n_pos = truth.iter().filter(|l| l.is_malware()).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average 1-based ranks over tie groups
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &r in &order[i..=j] {
            if truth[r].is_malware() {
                pos_rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// One report line. Rates are fractions; the CSV and markdown forms show
/// them as percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub feature_reduction: String,
    pub n_features: usize,
    pub classifier: String,
    pub accuracy: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub auc: f64,
    pub f1: f64,
    pub train_time_sec: f64,
    pub test_time_sec: f64,
    /// Reducer fitting time, kept out of `train_time_sec`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reducer_fit_sec: Option<f64>,
    /// Set when the cell failed; the metrics are then NaN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRow {
    pub fn failed(feature_reduction: &str, n_features: usize, classifier: &str, error: String) -> Self {
        EvalRow {
            feature_reduction: feature_reduction.to_string(),
            n_features,
            classifier: classifier.to_string(),
            accuracy: f64::NAN,
            tpr: f64::NAN,
            tnr: f64::NAN,
            auc: f64::NAN,
            f1: f64::NAN,
            train_time_sec: f64::NAN,
            test_time_sec: f64::NAN,
            reducer_fit_sec: None,
            error: Some(error),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Scores `test` with a fitted model and fills a row (times left at 0).
pub fn evaluate(model: &Model, test: &FeatureMatrix) -> Result<(Metrics, f64), EvalError> {
    let scores = model.score_rows(&test.data);
    let t = model.threshold();
    let predicted: Vec<Label> = scores.iter().map(|&s| Label::from_bool(s >= t)).collect();
    let m = metrics(&confusion(&test.labels, &predicted)?)?;
    let auc = roc_auc(&test.labels, &scores)?;
    Ok((m, auc))
}

/// Fits `classifier` on `train`, timing only the fit, then times scoring of
/// `test`. Failures come back as a row with `error` set.
pub fn timed_fit_eval(
    feature_reduction: &str,
    classifier: ClassifierKind,
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    seed: u64,
) -> (EvalRow, Option<Model>) {
    let name = classifier.name();
    let d = train.n_features();
    let start = Instant::now();
    let model = match classifier.fit(train, seed) {
        Ok(m) => m,
        Err(e) => return (EvalRow::failed(feature_reduction, d, name, e.to_string()), None),
    };
    let train_time_sec = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let scores = model.score_rows(&test.data);
    let test_time_sec = start.elapsed().as_secs_f64();

    let t = model.threshold();
    let predicted: Vec<Label> = scores.iter().map(|&s| Label::from_bool(s >= t)).collect();
    let outcome = confusion(&test.labels, &predicted)
        .and_then(|cm| metrics(&cm))
        .and_then(|m| Ok((m, roc_auc(&test.labels, &scores)?)));
    let row = match outcome {
        Ok((m, auc)) => EvalRow {
            feature_reduction: feature_reduction.to_string(),
            n_features: d,
            classifier: name.to_string(),
            accuracy: m.accuracy,
            tpr: m.tpr,
            tnr: m.tnr,
            auc,
            f1: m.f1,
            train_time_sec,
            test_time_sec,
            reducer_fit_sec: None,
            error: None,
        },
        Err(e) => EvalRow::failed(feature_reduction, d, name, e.to_string()),
    };
    (row, Some(model))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

fn pct(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{:.4}", v * 100.0)
    }
}

fn secs(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Renders rows in report order. CSV and markdown show rates in percent
/// with four decimals; JSON keeps raw fractions.
pub fn report_table(rows: &[EvalRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(REPORT_HEADER);
            out.push('\n');
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.feature_reduction,
                    r.n_features,
                    r.classifier,
                    pct(r.accuracy),
                    pct(r.tpr),
                    pct(r.tnr),
                    pct(r.auc),
                    pct(r.f1),
                    secs(r.train_time_sec),
                    secs(r.test_time_sec)
                );
            }
            out
        }
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => {
            let mut out = String::from(
                "| Feature Reduction | # Features | Classifier | Accuracy | TPR | TNR | AUC | F1 | Train Time (sec) | Test Time (sec) | Reducer Fit (sec) |\n",
            );
            out.push_str("|---|---:|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
            for r in rows {
                let fit = r.reducer_fit_sec.map(secs).unwrap_or_default();
                let acc = match &r.error {
                    Some(e) => format!("failed: {}", e.replace('|', "/")),
                    None => pct(r.accuracy),
                };
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    r.feature_reduction,
                    r.n_features,
                    r.classifier,
                    acc,
                    pct(r.tpr),
                    pct(r.tnr),
                    pct(r.auc),
                    pct(r.f1),
                    secs(r.train_time_sec),
                    secs(r.test_time_sec),
                    fit
                );
            }
            out
        }
    }
}

/// Parses the CSV form back into rows (rates back to fractions). Rows with
/// empty metric fields come back as failed rows.
pub fn parse_report_csv(text: &str) -> Result<Vec<EvalRow>, EvalError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == REPORT_HEADER => {}
        other => {
            return Err(EvalError::Parse {
                line: 1,
                message: format!("unexpected header {other:?}"),
            })
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let line_no = i + 2;
            let err = |message: String| EvalError::Parse { line: line_no, message };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(err(format!("{} fields", f.len())));
            }
            let n_features = f[1].parse().map_err(|e| err(format!("n_features: {e}")))?;
            if f[3..].iter().all(|v| v.is_empty()) {
                return Ok(EvalRow::failed(f[0], n_features, f[2], "failed".into()));
            }
            let num = |v: &str, what: &str| -> Result<f64, EvalError> {
                v.parse::<f64>().map_err(|e| err(format!("{what}: {e}")))
            };
            Ok(EvalRow {
                feature_reduction: f[0].to_string(),
                n_features,
                classifier: f[2].to_string(),
                accuracy: num(f[3], "accuracy")? / 100.0,
                tpr: num(f[4], "tpr")? / 100.0,
                tnr: num(f[5], "tnr")? / 100.0,
                auc: num(f[6], "auc")? / 100.0,
                f1: num(f[7], "f1")? / 100.0,
                train_time_sec: num(f[8], "train_time_sec")?,
                test_time_sec: num(f[9], "test_time_sec")?,
                reducer_fit_sec: None,
                error: None,
            })
        })
        .collect()
}
