use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use walkdir::WalkDir;

use super::{CorpusError, FeatureMatrix, LabelManifest};
use crate::dex::{parse_dex_with_id, parse_smali, OpcodeHistogram};

/// A manifest entry that could not be turned into a row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractFailure {
    pub app_id: String,
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    /// Raw counts, in manifest order, failed entries omitted.
    pub matrix: FeatureMatrix,
    pub failures: Vec<ExtractFailure>,
    /// Smali lines whose leading token was not a known mnemonic.
    pub unknown_smali_lines: usize,
}

/// Histogram for one app. `path` may be a `.dex` file, a `.smali` file, or a
/// directory (e.g. apktool output) whose `.dex`/`.smali` files are summed.
pub fn extract_path(path: &Path, app_id: &str) -> Result<(OpcodeHistogram, usize), String> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = WalkDir::new(path)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file())
            .map(|e| e.into_path())
            .filter(|p| matches!(extension(p).as_deref(), Some("dex" | "smali")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err("directory holds no .dex or .smali files".into());
        }
        let mut total = OpcodeHistogram::new(app_id);
        let mut unknown = 0;
        for f in files {
            let (h, u) = extract_file(&f, app_id)?;
            total += &h;
            unknown += u;
        }
        Ok((total, unknown))
    } else {
        extract_file(path, app_id)
    }
}

fn extension(p: &Path) -> Option<String> {
    p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase())
}

fn extract_file(path: &Path, app_id: &str) -> Result<(OpcodeHistogram, usize), String> {
    let context = |e: std::io::Error| format!("{}: {e}", path.display());
    match extension(path).as_deref() {
        Some("dex") => {
            let bytes = fs::read(path).map_err(context)?;
            let h = parse_dex_with_id(&bytes, app_id).map_err(|e| format!("{}: {e}", path.display()))?;
            Ok((h, 0))
        }
        Some("smali") => {
            let text = fs::read_to_string(path).map_err(context)?;
            let mut parsed = parse_smali(&text);
            parsed.histogram.app_id = app_id.to_owned();
            Ok((parsed.histogram, parsed.unknown))
        }
        _ => Err(format!(
            "{}: unsupported input (expected .dex or .smali)",
            path.display()
        )),
    }
}

/// Extracts every manifest entry in parallel. Row order follows the
/// manifest regardless of scheduling; failing entries are reported and
/// skipped.
pub fn extract_corpus(manifest: &LabelManifest) -> Result<Extraction, CorpusError> {
    let results: Vec<_> = manifest
        .entries
        .par_iter()
        .map(|e| extract_path(&e.path, &e.app_id))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut unknown_smali_lines = 0;
    for (entry, result) in manifest.entries.iter().zip(results) {
        match result {
            Ok((h, unknown)) => {
                unknown_smali_lines += unknown;
                rows.push((h, entry.label));
            }
            Err(message) => failures.push(ExtractFailure {
                app_id: entry.app_id.clone(),
                path: entry.path.clone(),
                message,
            }),
        }
    }
    if rows.is_empty() && !manifest.is_empty() {
        return Err(CorpusError::AllFilesFailed(failures.len()));
    }
    Ok(Extraction {
        matrix: FeatureMatrix::from_histograms(&rows),
        failures,
        unknown_smali_lines,
    })
}
