//! End-to-end runs: the classifier × reducer sweep, the clustering study,
//! cluster-then-classify, and the data behind the figures.

mod classify;
mod config;
mod plots;
mod study;
mod sweep;

pub use classify::{cluster_classify, write_cluster_classify, ClusterClassifyReport, ClusterDecision, ClusterReport};
pub use config::{ClassifyConfig, ClusterStudyConfig, CorpusSource, PipelineConfig, ProfileRef, SweepConfig};
pub use plots::{write_plot_data, PLOT_TOP_K};
pub use study::{cluster_study, write_cluster_study, ClusterStudyOutput, StudyRow};
pub use sweep::{fit_reducers, run_sweep, sweep_split, write_sweep, FittedReducer, ReducerKind, SweepOutput};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classic::ClassicError;
use crate::cluster::ClusterError;
use crate::corpus::{self, CorpusError, FeatureMatrix, Scale};
use crate::eval::EvalError;
use crate::features::{normalize_rows, FeatureError};
use crate::reduce::ReduceError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Classic(#[from] ClassicError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

/// Loaded corpus plus anything worth telling the user about it.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub matrix: FeatureMatrix,
    pub warnings: Vec<String>,
}

pub fn load_corpus(source: &CorpusSource, seed: u64) -> Result<LoadedCorpus, PipelineError> {
    let mut warnings = Vec::new();
    let matrix = match source {
        CorpusSource::Manifest { path } => {
            let manifest = corpus::load_manifest(path)?;
            let ex = corpus::extract_corpus(&manifest)?;
            for f in &ex.failures {
                warnings.push(format!("{}: {}", f.app_id, f.message));
            }
            ex.matrix
        }
        CorpusSource::Matrix { path } => corpus::load_matrix(path)?,
        CorpusSource::Synthetic {
            profile,
            n_benign,
            n_malware,
        } => corpus::synth_corpus(*n_benign, *n_malware, &profile.resolve()?, seed)?,
    };
    Ok(LoadedCorpus { matrix, warnings })
}

/// Brings `matrix` to the requested scale. Only raw counts can be converted;
/// reduced input is used as given.
pub fn prepare(matrix: &FeatureMatrix, scale: Scale) -> Result<FeatureMatrix, PipelineError> {
    match (matrix.scale, scale) {
        (a, b) if a == b => Ok(matrix.clone()),
        (Scale::RawCounts, Scale::RowNormalized) => Ok(normalize_rows(matrix).matrix),
        (Scale::Reduced, _) => Ok(matrix.clone()),
        (a, b) => Err(PipelineError::Config(format!("cannot turn {a:?} input into {b:?}"))),
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|source| PipelineError::Write {
        path: path.to_owned(),
        source,
    })
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Write {
        path: dir.to_owned(),
        source,
    })
}

/// Runs `f` on a pool of `workers` threads, or the global pool for `None`.
pub(crate) fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

#[cfg(test)]
mod tests;
