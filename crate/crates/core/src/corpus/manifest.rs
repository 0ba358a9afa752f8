use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::{CorpusError, Label};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub app_id: String,
    pub path: PathBuf,
    pub label: Label,
}

/// Labelled list of apps to extract.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelManifest {
    pub entries: Vec<ManifestEntry>,
}

impl LabelManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reads an `app_id,path,label` CSV. Relative paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<LabelManifest, CorpusError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_owned()));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let header = reader.headers()?.clone();
    let columns: Vec<&str> = header.iter().collect();
    if columns != ["app_id", "path", "label"] {
        return Err(CorpusError::BadHeader(columns.join(",")));
    }

    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record?;
        let app_id = record[0].to_owned();
        let label: Label = record[2].parse()?;
        if !seen.insert(app_id.clone()) {
            return Err(CorpusError::DuplicateId(app_id));
        }
        let file = PathBuf::from(&record[1]);
        let file = if file.is_relative() { base.join(file) } else { file };
        entries.push(ManifestEntry {
            app_id,
            path: file,
            label,
        });
    }
    Ok(LabelManifest { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("manifest.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn two_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "app_id,path,label\na,a.smali,malware\nb,/x/b.dex,benign\n");
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].label, Label::Malware);
        assert_eq!(m.entries[0].path, dir.path().join("a.smali"));
        assert_eq!(m.entries[1].path, PathBuf::from("/x/b.dex"));
    }

    #[test]
    fn unknown_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "app_id,path,label\na,a.smali,trojan\n");
        assert!(matches!(load_manifest(&p), Err(CorpusError::UnknownLabel(l)) if l == "trojan"));
    }

    #[test]
    fn duplicate_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "app_id,path,label\na,a.smali,benign\na,b.smali,malware\n");
        assert!(matches!(load_manifest(&p), Err(CorpusError::DuplicateId(_))));
    }

    #[test]
    fn bad_header_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "id,file,class\n");
        assert!(matches!(load_manifest(&p), Err(CorpusError::BadHeader(_))));
        assert!(matches!(
            load_manifest(dir.path().join("nope.csv")),
            Err(CorpusError::MissingFile(_))
        ));
    }
}
