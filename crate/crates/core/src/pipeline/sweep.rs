use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{create_dir, prepare, with_workers, write_file, PipelineError, SweepConfig};
use crate::classic::ClassifierKind;
use crate::corpus::{split, FeatureMatrix, SplitPair};
use crate::eval::{report_table, timed_fit_eval, EvalRow, ReportFormat};
use crate::neural::{fit_autoencoder, AeVariant};
use crate::reduce::{fit_pca, fit_variance_top_k, Reducer, DEFAULT_PCA_COMPONENTS, DEFAULT_VARIANCE_K};
use crate::rng::child_seed;

/// Feature-reduction step ahead of a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReducerKind {
    #[serde(rename = "Original Data", alias = "none", alias = "original")]
    Original,
    #[serde(rename = "VT", alias = "vt")]
    VarianceTopK,
    #[serde(rename = "PCA", alias = "pca")]
    Pca,
    #[serde(rename = "AE-1L", alias = "ae-1l")]
    Ae1L,
    #[serde(rename = "AE-3L", alias = "ae-3l")]
    Ae3L,
}

impl ReducerKind {
    pub const ALL: [ReducerKind; 5] = [
        ReducerKind::Original,
        ReducerKind::VarianceTopK,
        ReducerKind::Pca,
        ReducerKind::Ae1L,
        ReducerKind::Ae3L,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ReducerKind::Original => "Original Data",
            ReducerKind::VarianceTopK => "VT",
            ReducerKind::Pca => "PCA",
            ReducerKind::Ae1L => "AE-1L",
            ReducerKind::Ae3L => "AE-3L",
        }
    }

    fn index(self) -> u64 {
        ReducerKind::ALL.iter().position(|&r| r == self).unwrap() as u64
    }

    /// Width this reducer produces from `input_dim` columns.
    pub fn output_dim(self, input_dim: usize) -> usize {
        match self {
            ReducerKind::Original => input_dim,
            ReducerKind::VarianceTopK => DEFAULT_VARIANCE_K.min(input_dim),
            ReducerKind::Pca => DEFAULT_PCA_COMPONENTS,
            ReducerKind::Ae1L => AeVariant::Ae1L.bottleneck(),
            ReducerKind::Ae3L => AeVariant::Ae3L.bottleneck(),
        }
    }

    /// Fits on `train`; `None` for the identity.
    pub fn fit(self, train: &FeatureMatrix, seed: u64) -> Result<Option<Reducer>, String> {
        let r = match self {
            ReducerKind::Original => return Ok(None),
            ReducerKind::VarianceTopK => fit_variance_top_k(train, DEFAULT_VARIANCE_K).map_err(|e| e.to_string())?,
            ReducerKind::Pca => fit_pca(train, DEFAULT_PCA_COMPONENTS).map_err(|e| e.to_string())?,
            ReducerKind::Ae1L => fit_autoencoder(train, AeVariant::Ae1L, seed).map_err(|e| e.to_string())?,
            ReducerKind::Ae3L => fit_autoencoder(train, AeVariant::Ae3L, seed).map_err(|e| e.to_string())?,
        };
        Ok(Some(r))
    }
}

impl fmt::Display for ReducerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ReducerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "none" | "original" | "original data" => Ok(ReducerKind::Original),
            "vt" | "variance" => Ok(ReducerKind::VarianceTopK),
            "pca" => Ok(ReducerKind::Pca),
            "ae-1l" | "ae1l" => Ok(ReducerKind::Ae1L),
            "ae-3l" | "ae3l" => Ok(ReducerKind::Ae3L),
            _ => Err(format!("unknown reducer {s:?}")),
        }
    }
}

/// A reducer fitted on the training split, with its transformed splits.
#[derive(Debug, Clone)]
pub struct FittedReducer {
    pub kind: ReducerKind,
    /// `None` for the identity or when fitting failed.
    pub reducer: Option<Reducer>,
    pub fit_sec: f64,
    pub train: Option<FeatureMatrix>,
    pub test: Option<FeatureMatrix>,
    pub error: Option<String>,
}

/// Fits every reducer on `split.train` only and transforms both halves.
pub fn fit_reducers(split: &SplitPair, kinds: &[ReducerKind], seed: u64) -> Vec<FittedReducer> {
    kinds
        .par_iter()
        .map(|&kind| {
            let start = Instant::now();
            let fitted = kind.fit(&split.train, child_seed(seed, 10 + kind.index()));
            let fit_sec = start.elapsed().as_secs_f64();
            let applied = fitted.and_then(|r| match &r {
                None => Ok((r, split.train.clone(), split.test.clone())),
                Some(red) => {
                    let tr = red.apply(&split.train).map_err(|e| e.to_string())?;
                    let te = red.apply(&split.test).map_err(|e| e.to_string())?;
                    Ok((r, tr, te))
                }
            });
            match applied {
                Ok((reducer, train, test)) => FittedReducer {
                    kind,
                    reducer,
                    fit_sec,
                    train: Some(train),
                    test: Some(test),
                    error: None,
                },
                Err(e) => FittedReducer {
                    kind,
                    reducer: None,
                    fit_sec,
                    train: None,
                    test: None,
                    error: Some(e),
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// Classifier-major, reducers in configured order.
    pub rows: Vec<EvalRow>,
    pub reducers: Vec<FittedReducer>,
    pub n_train: usize,
    pub n_test: usize,
    pub warnings: Vec<String>,
}

impl SweepOutput {
    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(EvalRow::is_failed)
    }

    pub fn row(&self, reducer: ReducerKind, classifier: ClassifierKind) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.feature_reduction == reducer.tag() && r.classifier == classifier.name())
    }
}

/// Runs the sweep on a prepared split. Cells run in parallel; row order
/// and every fitted model depend only on the seed.
pub fn sweep_split(split: &SplitPair, cfg: &SweepConfig, seed: u64, workers: Option<usize>) -> SweepOutput {
    with_workers(workers, || {
        let reducers = fit_reducers(split, &cfg.reducers, seed);
        let cells: Vec<(ClassifierKind, &FittedReducer)> = cfg
            .classifiers
            .iter()
            .flat_map(|&c| reducers.iter().map(move |r| (c, r)))
            .collect();
        let rows: Vec<EvalRow> = cells
            .par_iter()
            .map(|&(clf, fr)| {
                let tag = fr.kind.tag();
                match (&fr.train, &fr.test, &fr.error) {
                    (Some(train), Some(test), _) => {
                        let cls_idx = ClassifierKind::ALL.iter().position(|&c| c == clf).unwrap() as u64;
                        let cell_seed = child_seed(seed, 100 + 10 * cls_idx + fr.kind.index());
                        let (mut row, _) = timed_fit_eval(tag, clf, train, test, cell_seed);
                        if fr.kind != ReducerKind::Original {
                            row.reducer_fit_sec = Some(fr.fit_sec);
                        }
                        row
                    }
                    (_, _, err) => {
                        let d = fr.kind.output_dim(split.train.n_features());
                        let msg = format!("reducer failed: {}", err.as_deref().unwrap_or("unknown"));
                        EvalRow::failed(tag, d, clf.name(), msg)
                    }
                }
            })
            .collect();

        let mut warnings: Vec<String> = reducers
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.kind)))
            .collect();
        warnings.extend(
            reducers
                .iter()
                .filter_map(|r| r.reducer.as_ref()?.warning().map(|w| format!("{}: {w}", r.kind))),
        );
        warnings.extend(rows.iter().filter_map(|r| {
            r.error
                .as_ref()
                .map(|e| format!("{} / {}: {e}", r.classifier, r.feature_reduction))
        }));
        SweepOutput {
            rows,
            reducers,
            n_train: split.train.n_rows(),
            n_test: split.test.n_rows(),
            warnings,
        }
    })
}

/// Prepares the input scale, makes the stratified split and runs the sweep.
pub fn run_sweep(
    matrix: &FeatureMatrix,
    cfg: &SweepConfig,
    seed: u64,
    workers: Option<usize>,
) -> Result<SweepOutput, PipelineError> {
    let input = prepare(matrix, cfg.input)?;
    let pair = split(&input, cfg.train_ratio, seed, true)?;
    Ok(sweep_split(&pair, cfg, seed, workers))
}

/// `sweep_report.{csv,json,md}` under `dir`.
pub fn write_sweep(dir: &Path, out: &SweepOutput) -> Result<(), PipelineError> {
    create_dir(dir)?;
    write_file(
        &dir.join("sweep_report.csv"),
        report_table(&out.rows, ReportFormat::Csv),
    )?;
    write_file(
        &dir.join("sweep_report.json"),
        report_table(&out.rows, ReportFormat::Json),
    )?;
    let mut md = report_table(&out.rows, ReportFormat::Markdown);
    md.push_str(&format!(
        "\n{} train / {} test rows. Reducers are fit on the training split; their fit time is reported separately from classifier train time.\n",
        out.n_train, out.n_test
    ));
    write_file(&dir.join("sweep_report.md"), md)
}
