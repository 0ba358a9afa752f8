//! Labelled feature matrices: ingestion, persistence, splitting and a
//! synthetic corpus generator.

mod extract;
mod io;
mod manifest;
mod split;
mod synth;

pub use extract::{extract_corpus, extract_path, ExtractFailure, Extraction};
pub use io::{load_matrix, read_matrix, save_matrix, write_matrix};
pub use manifest::{load_manifest, LabelManifest, ManifestEntry};
pub use split::{split, SplitPair};
pub use synth::{synth_corpus, ProfileComponent, SynthProfile};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dex::{mnemonics, OpcodeHistogram};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("bad manifest header `{0}`, expected `app_id,path,label`")]
    BadHeader(String),
    #[error("duplicate app_id `{0}`")]
    DuplicateId(String),
    #[error("unknown label `{0}` (expected malware or benign)")]
    UnknownLabel(String),
    #[error("all {0} files failed to parse")]
    AllFilesFailed(usize),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("too few rows: {0}")]
    TooFewRows(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Binary class label; malware is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malware,
}

impl Label {
    pub fn is_malware(self) -> bool {
        self == Label::Malware
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malware => "malware",
        }
    }

    pub fn from_bool(malware: bool) -> Self {
        if malware {
            Label::Malware
        } else {
            Label::Benign
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "malware" => Ok(Label::Malware),
            "benign" => Ok(Label::Benign),
            other => Err(CorpusError::UnknownLabel(other.to_owned())),
        }
    }
}

/// What the values of a [`FeatureMatrix`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    RawCounts,
    RowNormalized,
    Reduced,
}

/// N labelled rows of numeric features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub labels: Vec<Label>,
    pub data: Array2<f64>,
    pub feature_names: Vec<String>,
    pub scale: Scale,
}

impl FeatureMatrix {
    pub fn new(
        ids: Vec<String>,
        labels: Vec<Label>,
        data: Array2<f64>,
        feature_names: Vec<String>,
        scale: Scale,
    ) -> Result<Self, CorpusError> {
        if ids.len() != data.nrows() || labels.len() != data.nrows() {
            return Err(CorpusError::InvalidMatrix(format!(
                "{} ids / {} labels for {} rows",
                ids.len(),
                labels.len(),
                data.nrows()
            )));
        }
        if feature_names.len() != data.ncols() {
            return Err(CorpusError::InvalidMatrix(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                data.ncols()
            )));
        }
        if scale == Scale::RawCounts && data.iter().any(|&v| v < 0.0 || v.fract() != 0.0 || !v.is_finite()) {
            return Err(CorpusError::InvalidMatrix(
                "raw-counts matrix holds a non-count value".into(),
            ));
        }
        // Standard layout keeps every row contiguous.
        let data = data.as_standard_layout().into_owned();
        Ok(FeatureMatrix {
            ids,
            labels,
            data,
            feature_names,
            scale,
        })
    }

    /// Raw-count matrix with one row per histogram.
    pub fn from_histograms(rows: &[(OpcodeHistogram, Label)]) -> Self {
        let mut data = Array2::zeros((rows.len(), 256));
        for (i, (h, _)) in rows.iter().enumerate() {
            for (j, &c) in h.counts().iter().enumerate() {
                data[[i, j]] = c as f64;
            }
        }
        FeatureMatrix {
            ids: rows.iter().map(|(h, _)| h.app_id.clone()).collect(),
            labels: rows.iter().map(|(_, l)| *l).collect(),
            data,
            feature_names: mnemonics(),
            scale: Scale::RawCounts,
        }
    }

    pub fn empty_opcodes(scale: Scale) -> Self {
        FeatureMatrix {
            ids: Vec::new(),
            labels: Vec::new(),
            data: Array2::zeros((0, 256)),
            feature_names: mnemonics(),
            scale,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * self.data.ncols();
        &self.data.as_slice().expect("standard layout")[start..start + self.data.ncols()]
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.data.column(j)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    /// (benign, malware) row counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let malware = self.labels.iter().filter(|l| l.is_malware()).count();
        (self.labels.len() - malware, malware)
    }

    pub fn targets(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.is_malware()).collect()
    }

    /// New matrix holding `indices` in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            data: self.data.select(Axis(0), indices),
            feature_names: self.feature_names.clone(),
            scale: self.scale,
        }
    }

    /// Same ids and labels, new values.
    pub fn with_data(&self, data: Array2<f64>, feature_names: Vec<String>, scale: Scale) -> Self {
        assert_eq!(data.nrows(), self.n_rows());
        assert_eq!(data.ncols(), feature_names.len());
        FeatureMatrix {
            ids: self.ids.clone(),
            labels: self.labels.clone(),
            data: data.as_standard_layout().into_owned(),
            feature_names,
            scale,
        }
    }
}
