use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, ReducerKind};
use crate::classic::ClassifierKind;
use crate::cluster::{Algorithm, Linkage, DEFAULT_MIN_PTS};
use crate::corpus::{Scale, SynthProfile};

/// Where the apps come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CorpusSource {
    /// `app_id,path,label` manifest of dex/smali files.
    Manifest { path: PathBuf },
    /// A feature-matrix CSV written by `extract` or `synth`.
    Matrix { path: PathBuf },
    Synthetic {
        #[serde(default)]
        profile: ProfileRef,
        n_benign: usize,
        n_malware: usize,
    },
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Synthetic {
            profile: ProfileRef::default(),
            n_benign: 2000,
            n_malware: 2000,
        }
    }
}

/// A built-in profile name (`default`, `benign-mode`) or a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProfileRef(pub String);

impl Default for ProfileRef {
    fn default() -> Self {
        ProfileRef("default".into())
    }
}

impl ProfileRef {
    pub fn resolve(&self) -> Result<SynthProfile, PipelineError> {
        Ok(match self.0.as_str() {
            "default" => SynthProfile::default_profile(),
            "benign-mode" => SynthProfile::with_benign_mode(),
            path => SynthProfile::load(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub reducers: Vec<ReducerKind>,
    pub classifiers: Vec<ClassifierKind>,
    /// Scale fed to reducers and classifiers.
    pub input: Scale,
    pub train_ratio: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            reducers: ReducerKind::ALL.to_vec(),
            classifiers: ClassifierKind::ALL.to_vec(),
            input: Scale::RowNormalized,
            train_ratio: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterStudyConfig {
    /// Algorithms swept over `k_min..=k_max`; DBSCAN uses `eps` instead.
    pub algorithms: Vec<Algorithm>,
    pub k_min: usize,
    pub k_max: usize,
    /// DBSCAN radii. Empty picks three from the 4-NN distance distribution.
    pub eps: Vec<f64>,
    pub min_pts: usize,
    pub linkage: Linkage,
    /// BIRCH absorb radius. `None` derives it from the data.
    pub birch_threshold: Option<f64>,
    pub birch_branching: usize,
    pub input: Scale,
}

impl Default for ClusterStudyConfig {
    fn default() -> Self {
        ClusterStudyConfig {
            algorithms: vec![
                Algorithm::KMeans,
                Algorithm::Agglomerative,
                Algorithm::Birch,
                Algorithm::Gmm,
                Algorithm::Dbscan,
            ],
            k_min: 2,
            k_max: 5,
            eps: Vec::new(),
            min_pts: DEFAULT_MIN_PTS,
            linkage: Linkage::Ward,
            birch_threshold: None,
            birch_branching: 50,
            input: Scale::RawCounts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    /// Majority share at or above which a cluster is labelled outright.
    pub purity: f64,
    /// Smaller clusters are labelled by majority with a warning.
    pub min_cluster_size: usize,
    /// Space the k-means step runs in.
    pub cluster_input: Scale,
    /// Space the per-cluster classifiers see.
    pub classifier_input: Scale,
    pub classifiers: Vec<ClassifierKind>,
    pub restarts: usize,
    /// Also evaluate the classifiers on the whole corpus for comparison.
    pub baseline: bool,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            purity: 0.98,
            min_cluster_size: 10,
            cluster_input: Scale::RawCounts,
            classifier_input: Scale::RowNormalized,
            classifiers: ClassifierKind::ALL.to_vec(),
            restarts: 10,
            baseline: true,
        }
    }
}

/// Everything a run needs, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Thread count for parallel cells; `None` uses every core.
    pub workers: Option<usize>,
    pub corpus: CorpusSource,
    pub sweep: SweepConfig,
    pub cluster_study: ClusterStudyConfig,
    pub cluster_classify: ClassifyConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            out_dir: PathBuf::from("out"),
            workers: None,
            corpus: CorpusSource::default(),
            sweep: SweepConfig::default(),
            cluster_study: ClusterStudyConfig::default(),
            cluster_classify: ClassifyConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.sweep.classifiers.is_empty() {
            return bad("sweep needs at least one classifier");
        }
        if self.sweep.reducers.is_empty() {
            return bad("sweep needs at least one reducer");
        }
        if !(self.sweep.train_ratio > 0.0 && self.sweep.train_ratio < 1.0) {
            return bad("train_ratio must lie strictly between 0 and 1");
        }
        let cs = &self.cluster_study;
        if cs.k_min < 2 || cs.k_max < cs.k_min {
            return bad("cluster study needs 2 <= k_min <= k_max");
        }
        if cs.eps.iter().any(|&e| !(e > 0.0)) {
            return bad("eps values must be positive");
        }
        if cs.birch_threshold.is_some_and(|t| !(t > 0.0)) {
            return bad("birch_threshold must be positive");
        }
        if self.cluster_classify.classifiers.is_empty() {
            return bad("cluster-classify needs at least one classifier");
        }
        if !(self.cluster_classify.purity > 0.0) {
            return bad("purity must be positive");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        Ok(())
    }
}
