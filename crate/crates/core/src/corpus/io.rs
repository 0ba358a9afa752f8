//! Feature-matrix CSV: `app_id,label,op_00..op_ff`, LF line endings.
//!
//! Raw counts are written as integers. Any other scale is written with 17
//! significant digits (`{:.16e}`), which round-trips every `f64`; the loader
//! recognises that form and restores the row-normalized scale.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{CorpusError, FeatureMatrix, Label, Scale};
use crate::dex::mnemonics;

fn header() -> Vec<String> {
    let mut h = vec!["app_id".to_owned(), "label".to_owned()];
    h.extend((0..256).map(|b| format!("op_{b:02x}")));
    h
}

pub fn write_matrix<W: Write>(matrix: &FeatureMatrix, out: W) -> Result<(), CorpusError> {
    if matrix.n_features() != 256 {
        return Err(CorpusError::SchemaMismatch(format!(
            "matrix has {} feature columns, the file format holds 256",
            matrix.n_features()
        )));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header())?;
    let raw = matrix.scale == Scale::RawCounts;
    let mut record: Vec<String> = Vec::with_capacity(258);
    for i in 0..matrix.n_rows() {
        record.clear();
        record.push(matrix.ids[i].clone());
        record.push(matrix.labels[i].to_string());
        record.extend(matrix.row(i).iter().map(|&v| {
            if raw {
                format!("{}", v as u64)
            } else {
                format!("{v:.16e}")
            }
        }));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_matrix(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let file = File::create(path)?;
    write_matrix(matrix, BufWriter::new(file))
}

pub fn read_matrix<R: Read>(input: R) -> Result<FeatureMatrix, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if found.len() != 258 {
        return Err(CorpusError::SchemaMismatch(format!(
            "expected 258 columns (app_id,label,op_00..op_ff), found {}",
            found.len()
        )));
    }
    if found != header() {
        return Err(CorpusError::SchemaMismatch(format!(
            "unexpected header starting `{}`",
            found[..3].join(",")
        )));
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut fractional = false;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 258 {
            return Err(CorpusError::SchemaMismatch(format!(
                "row {} has {} columns",
                line + 1,
                record.len()
            )));
        }
        ids.push(record[0].to_owned());
        labels.push(record[1].parse::<Label>()?);
        for field in record.iter().skip(2) {
            fractional |= field.contains(['.', 'e', 'E']);
            let v: f64 = field
                .parse()
                .map_err(|_| CorpusError::SchemaMismatch(format!("row {}: bad number `{field}`", line + 1)))?;
            values.push(v);
        }
    }
    let n = ids.len();
    let data = Array2::from_shape_vec((n, 256), values).expect("shape checked per row");
    let scale = if fractional {
        Scale::RowNormalized
    } else {
        Scale::RawCounts
    };
    FeatureMatrix::new(ids, labels, data, mnemonics(), scale)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix, CorpusError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_owned()));
    }
    read_matrix(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dex::OpcodeHistogram;
    use proptest::prelude::*;

    fn sample() -> FeatureMatrix {
        let mut a = OpcodeHistogram::new("a");
        a.add_n(0x00, 3);
        a.add_n(0xff, 12345678901);
        let mut b = OpcodeHistogram::new("b,with comma");
        b.add(0x6e);
        FeatureMatrix::from_histograms(&[(a, Label::Malware), (b, Label::Benign)])
    }

    #[test]
    fn raw_round_trip() {
        let m = sample();
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("app_id,label,op_00,op_01"));
        assert!(!text.contains('\r'));
        assert_eq!(read_matrix(&buf[..]).unwrap(), m);
    }

    #[test]
    fn empty_rows_header_only() {
        let m = FeatureMatrix::empty_opcodes(Scale::RawCounts);
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 1);
        assert_eq!(read_matrix(&buf[..]).unwrap(), m);
    }

    #[test]
    fn short_schema_rejected() {
        let mut text = String::from("app_id,label");
        for b in 0..255 {
            text.push_str(&format!(",op_{b:02x}"));
        }
        text.push('\n');
        assert!(matches!(
            read_matrix(text.as_bytes()),
            Err(CorpusError::SchemaMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn normalized_values_round_trip(values in proptest::collection::vec(0.0f64..1.0, 256 * 3)) {
            let data = Array2::from_shape_vec((3, 256), values).unwrap();
            let m = FeatureMatrix::new(
                vec!["x".into(), "y".into(), "z".into()],
                vec![Label::Benign, Label::Malware, Label::Benign],
                data,
                mnemonics(),
                Scale::RowNormalized,
            ).unwrap();
            let mut buf = Vec::new();
            write_matrix(&m, &mut buf).unwrap();
            prop_assert_eq!(read_matrix(&buf[..]).unwrap(), m);
        }
    }
}
