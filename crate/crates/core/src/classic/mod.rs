//! Classical learners written from scratch: Gini decision tree, random
//! forest, k-nearest neighbours, linear SVM and SAMME.R AdaBoost.
//!
//! Every fitted model is wrapped in [`Model`], which also covers the DNN
//! classifiers from [`crate::neural`], so evaluation code can treat them
//! uniformly.

mod adaboost;
mod knn;
mod svm;
mod tree;

pub use adaboost::{train_adaboost, AdaBoost, BoostParams, Stump};
pub use knn::{train_knn, Knn};
pub use svm::{train_svm_linear, LinearSvm, SvmParams};
pub use tree::{train_dt, train_rf, DecisionTree, ForestParams, RandomForest, TreeNode};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{FeatureMatrix, Label};
use crate::neural::{train_dnn, DnnClassifier, DnnVariant, NeuralError};

pub const DEFAULT_K: usize = 5;
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassicError {
    #[error("training data holds a single class")]
    SingleClass,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model document: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The classifier families, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "DT")]
    Dt,
    #[serde(rename = "kNN")]
    Knn,
    #[serde(rename = "SVM")]
    Svm,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "AdaBoost")]
    AdaBoost,
    #[serde(rename = "DNN-2L")]
    Dnn2L,
    #[serde(rename = "DNN-4L")]
    Dnn4L,
    #[serde(rename = "DNN-7L")]
    Dnn7L,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 8] = [
        ClassifierKind::Dt,
        ClassifierKind::Knn,
        ClassifierKind::Svm,
        ClassifierKind::Rf,
        ClassifierKind::AdaBoost,
        ClassifierKind::Dnn2L,
        ClassifierKind::Dnn4L,
        ClassifierKind::Dnn7L,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Dt => "DT",
            ClassifierKind::Knn => "kNN",
            ClassifierKind::Svm => "SVM",
            ClassifierKind::Rf => "RF",
            ClassifierKind::AdaBoost => "AdaBoost",
            ClassifierKind::Dnn2L => "DNN-2L",
            ClassifierKind::Dnn4L => "DNN-4L",
            ClassifierKind::Dnn7L => "DNN-7L",
        }
    }

    pub fn dnn_variant(self) -> Option<DnnVariant> {
        match self {
            ClassifierKind::Dnn2L => Some(DnnVariant::Dnn2L),
            ClassifierKind::Dnn4L => Some(DnnVariant::Dnn4L),
            ClassifierKind::Dnn7L => Some(DnnVariant::Dnn7L),
            _ => None,
        }
    }

    /// Fits this classifier with its published hyperparameters.
    pub fn fit(self, train: &FeatureMatrix, seed: u64) -> Result<Model, ClassicError> {
        Ok(match self {
            ClassifierKind::Dt => Model::Dt(train_dt(train)?),
            ClassifierKind::Knn => Model::Knn(train_knn(train, DEFAULT_K)?),
            ClassifierKind::Svm => Model::Svm(train_svm_linear(train, SvmParams::new(seed))?),
            ClassifierKind::Rf => Model::Rf(train_rf(train, ForestParams::new(seed))?),
            ClassifierKind::AdaBoost => Model::AdaBoost(train_adaboost(train, BoostParams::new(seed))?),
            dnn => Model::Dnn(train_dnn(train, dnn.dnn_variant().unwrap(), seed)?),
        })
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    /// Case-insensitive report name (`dt`, `knn`, `dnn-2l`, ...).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown classifier {s:?}"))
    }
}

/// A fitted classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Dt(DecisionTree),
    Rf(RandomForest),
    Knn(Knn),
    Svm(LinearSvm),
    #[serde(rename = "adaboost")]
    AdaBoost(AdaBoost),
    Dnn(DnnClassifier),
}

#[derive(Serialize, Deserialize)]
struct Document {
    format_version: u32,
    model: Model,
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Dt(_) => "dt",
            Model::Rf(_) => "rf",
            Model::Knn(_) => "knn",
            Model::Svm(_) => "svm",
            Model::AdaBoost(_) => "adaboost",
            Model::Dnn(_) => "dnn",
        }
    }

    /// Score at or above which a row is called malware: 0 for the SVM
    /// margin, 0.5 for fractions and probabilities.
    pub fn threshold(&self) -> f64 {
        match self {
            Model::Svm(_) => 0.0,
            _ => 0.5,
        }
    }

    /// Continuous malware score; larger means more malware-like.
    pub fn score(&self, row: &[f64]) -> f64 {
        match self {
            Model::Dt(m) => m.score(row),
            Model::Rf(m) => m.score(row),
            Model::Knn(m) => m.score(row),
            Model::Svm(m) => m.score(row),
            Model::AdaBoost(m) => m.score(row),
            Model::Dnn(m) => m.score(row),
        }
    }

    pub fn predict(&self, row: &[f64]) -> Label {
        Label::from_bool(self.score(row) >= self.threshold())
    }

    /// Scores for every row of `data`.
    pub fn score_rows(&self, data: &Array2<f64>) -> Vec<f64> {
        match self {
            Model::Dnn(m) => m.score_rows(data),
            _ => {
                let data = data.as_standard_layout();
                let flat = data.as_slice().expect("standard layout");
                let d = data.ncols().max(1);
                if data.nrows() == 0 {
                    return Vec::new();
                }
                flat.par_chunks(d).map(|row| self.score(row)).collect()
            }
        }
    }

    pub fn predict_rows(&self, data: &Array2<f64>) -> Vec<Label> {
        let t = self.threshold();
        self.score_rows(data)
            .into_iter()
            .map(|s| Label::from_bool(s >= t))
            .collect()
    }

    pub fn warning(&self) -> Option<&str> {
        match self {
            Model::Svm(m) => m.warning.as_deref(),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String, ClassicError> {
        let doc = Document {
            format_version: FORMAT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ClassicError> {
        let doc: Document = serde_json::from_str(text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(ClassicError::UnsupportedVersion(doc.format_version));
        }
        Ok(doc.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassicError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassicError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests;
