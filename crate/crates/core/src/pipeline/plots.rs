use std::path::Path;

use super::{create_dir, prepare, write_file, PipelineError};
use crate::cluster::elbow_curve;
use crate::corpus::{FeatureMatrix, Scale};
use crate::features::{normalize_rows, prominent_opcodes};
use crate::reduce::fit_pca;

/// Bars in the class-difference figure.
pub const PLOT_TOP_K: usize = 15;
const ELBOW_K_MAX: usize = 10;

/// Figure data for external plotting:
/// * `plot_elbow.csv`: `k,sse` for k = 1..=10 in `elbow_space`;
/// * `plot_top_differences.csv`: the 15 opcodes with the largest class-mean
///   gap on row-normalized data;
/// * `plot_pca_scatter.csv`: first two principal components per app.
pub fn write_plot_data(dir: &Path, matrix: &FeatureMatrix, elbow_space: Scale, seed: u64) -> Result<(), PipelineError> {
    create_dir(dir)?;
    let space = prepare(matrix, elbow_space)?;
    let ks = 1..=ELBOW_K_MAX.min(space.n_rows());
    let mut elbow = String::from("k,sse\n");
    for (k, sse) in elbow_curve(&space.data, ks, seed)? {
        elbow.push_str(&format!("{k},{sse}\n"));
    }
    write_file(&dir.join("plot_elbow.csv"), elbow)?;

    let normalized = match matrix.scale {
        Scale::RawCounts => normalize_rows(matrix).matrix,
        _ => matrix.clone(),
    };
    let report = prominent_opcodes(&normalized, PLOT_TOP_K)?;
    let mut top = String::from("rank,opcode,benign_mean,malware_mean,difference\n");
    for (rank, &j) in report.top().iter().enumerate() {
        top.push_str(&format!(
            "{},{},{},{},{}\n",
            rank + 1,
            normalized.feature_names[j],
            report.benign_mean[j],
            report.malware_mean[j],
            report.difference[j]
        ));
    }
    write_file(&dir.join("plot_top_differences.csv"), top)?;

    let pca = fit_pca(&normalized, 2)?;
    let pcs = pca.transform(&normalized.data)?;
    let mut scatter = String::from("app_id,label,pc1,pc2\n");
    for (i, id) in normalized.ids.iter().enumerate() {
        scatter.push_str(&format!(
            "{id},{},{},{}\n",
            normalized.labels[i],
            pcs[[i, 0]],
            pcs[[i, 1]]
        ));
    }
    write_file(&dir.join("plot_pca_scatter.csv"), scatter)
}
