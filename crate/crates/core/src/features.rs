//! Row normalization, prominent-opcode ranking, unused opcodes and
//! correlation pairs.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{FeatureMatrix, Label, Scale};
use crate::dex::opcode_table;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("need at least 2 rows, class subset has {0}")]
    TooFewRows(usize),
}

/// Output of [`normalize_rows`].
#[derive(Debug, Clone)]
pub struct Normalized {
    pub matrix: FeatureMatrix,
    /// App ids of rows whose total was zero; they stay all-zero.
    pub empty_rows: Vec<String>,
}

/// Divides each row by its own total.
pub fn normalize_rows(matrix: &FeatureMatrix) -> Normalized {
    let mut data = matrix.data.clone();
    let mut empty_rows = Vec::new();
    for (i, mut row) in data.rows_mut().into_iter().enumerate() {
        let total: f64 = row.sum();
        if total == 0.0 {
            empty_rows.push(matrix.ids[i].clone());
        } else {
            row.mapv_inplace(|v| v / total);
        }
    }
    Normalized {
        matrix: matrix.with_data(data, matrix.feature_names.clone(), Scale::RowNormalized),
        empty_rows,
    }
}

/// Per-opcode class means and their absolute difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProminentOpcodeReport {
    pub benign_mean: Vec<f64>,
    pub malware_mean: Vec<f64>,
    pub difference: Vec<f64>,
    /// All column indices, by difference descending, ties to the lower index.
    pub ranking: Vec<usize>,
    pub k: usize,
}

impl ProminentOpcodeReport {
    /// The first `min(k, n)` entries of the ranking.
    pub fn top(&self) -> &[usize] {
        &self.ranking[..self.k.min(self.ranking.len())]
    }

    /// True when no column separates the classes at all.
    pub fn is_flat(&self) -> bool {
        self.difference.iter().all(|&d| d == 0.0)
    }

    /// CSV `opcode,mnemonic,F_B,F_M,D` for the top-k rows.
    pub fn write_csv<W: Write>(&self, mut out: W, names: &[String]) -> std::io::Result<()> {
        writeln!(out, "opcode,mnemonic,F_B,F_M,D")?;
        for &j in self.top() {
            writeln!(
                out,
                "{},{},{},{},{}",
                column_label(j, names.len()),
                names[j],
                self.benign_mean[j],
                self.malware_mean[j],
                self.difference[j]
            )?;
        }
        Ok(())
    }
}

fn column_label(j: usize, n: usize) -> String {
    if n == 256 {
        format!("0x{j:02x}")
    } else {
        j.to_string()
    }
}

/// Ranks columns by |mean_benign - mean_malware| on a row-normalized matrix.
pub fn prominent_opcodes(matrix: &FeatureMatrix, k: usize) -> Result<ProminentOpcodeReport, FeatureError> {
    let (n_benign, n_malware) = matrix.class_counts();
    if n_benign == 0 || n_malware == 0 {
        return Err(FeatureError::SingleClass);
    }
    let d = matrix.n_features();
    let mut benign_mean = vec![0.0; d];
    let mut malware_mean = vec![0.0; d];
    for (row, label) in matrix.rows().zip(&matrix.labels) {
        let acc = match label {
            Label::Benign => &mut benign_mean,
            Label::Malware => &mut malware_mean,
        };
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    benign_mean.iter_mut().for_each(|v| *v /= n_benign as f64);
    malware_mean.iter_mut().for_each(|v| *v /= n_malware as f64);
    let difference: Vec<f64> = benign_mean
        .iter()
        .zip(&malware_mean)
        .map(|(b, m)| (b - m).abs())
        .collect();
    let mut ranking: Vec<usize> = (0..d).collect();
    ranking.sort_by(|&a, &b| difference[b].total_cmp(&difference[a]).then(a.cmp(&b)));
    Ok(ProminentOpcodeReport {
        benign_mean,
        malware_mean,
        difference,
        ranking,
        k,
    })
}

/// Columns that are zero in every row.
pub fn unused_opcodes(matrix: &FeatureMatrix) -> Vec<usize> {
    (0..matrix.n_features())
        .filter(|&j| matrix.column(j).iter().all(|&v| v == 0.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassFilter {
    Malware,
    Benign,
    All,
}

impl ClassFilter {
    fn admits(self, label: Label) -> bool {
        match self {
            ClassFilter::All => true,
            ClassFilter::Malware => label == Label::Malware,
            ClassFilter::Benign => label == Label::Benign,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassFilter::Malware => "malware",
            ClassFilter::Benign => "benign",
            ClassFilter::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPair {
    pub a: usize,
    pub b: usize,
    pub r: f64,
    pub class: ClassFilter,
}

/// Pearson correlation between every pair of non-constant columns within
/// the class subset; returns the `top_n` largest r.
pub fn correlation_pairs(
    matrix: &FeatureMatrix,
    class: ClassFilter,
    top_n: usize,
) -> Result<Vec<CorrelationPair>, FeatureError> {
    let rows: Vec<usize> = (0..matrix.n_rows())
        .filter(|&i| class.admits(matrix.labels[i]))
        .collect();
    if rows.len() < 2 {
        return Err(FeatureError::TooFewRows(rows.len()));
    }
    let n = rows.len() as f64;
    let d = matrix.n_features();

    // centred, unit-norm columns of the subset
    let mut z = Array2::<f64>::zeros((d, rows.len()));
    let mut keep = Vec::new();
    for j in 0..d {
        let col = matrix.column(j);
        let mean = rows.iter().map(|&i| col[i]).sum::<f64>() / n;
        let ss: f64 = rows.iter().map(|&i| (col[i] - mean).powi(2)).sum();
        if ss <= 0.0 {
            continue;
        }
        let norm = ss.sqrt();
        for (t, &i) in rows.iter().enumerate() {
            z[[j, t]] = (col[i] - mean) / norm;
        }
        keep.push(j);
    }

    let mut pairs = Vec::new();
    for (x, &a) in keep.iter().enumerate() {
        let za = z.row(a);
        for &b in &keep[x + 1..] {
            let r = za.dot(&z.row(b)).clamp(-1.0, 1.0);
            pairs.push(CorrelationPair { a, b, r, class });
        }
    }
    pairs.sort_by(|p, q| q.r.total_cmp(&p.r).then((p.a, p.b).cmp(&(q.a, q.b))));
    pairs.truncate(top_n);
    Ok(pairs)
}

/// CSV `op_a,op_b,r,class`, opcode columns by mnemonic.
pub fn write_correlations_csv<W: Write>(
    mut out: W,
    pairs: &[CorrelationPair],
    names: &[String],
) -> std::io::Result<()> {
    writeln!(out, "op_a,op_b,r,class")?;
    for p in pairs {
        writeln!(out, "{},{},{},{}", names[p.a], names[p.b], p.r, p.class.as_str())?;
    }
    Ok(())
}

/// CSV `opcode,mnemonic,reserved` of columns never used.
pub fn write_unused_csv<W: Write>(mut out: W, unused: &[usize]) -> std::io::Result<()> {
    let table = opcode_table();
    writeln!(out, "opcode,mnemonic,reserved")?;
    for &j in unused {
        let e = table.get(j as u8);
        writeln!(out, "0x{j:02x},{},{}", e.mnemonic, e.unused)?;
    }
    Ok(())
}
