//! Dataset manifests: a CSV table with header `subject_id,tensor_file,label,site`.
//! `tensor_file` is resolved relative to the manifest's directory and must be
//! an ST4D file whose first entry is the `[T, C, D, H, W]` series.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::st4d::{read_tensor_file, scan_tensor_file, write_tensor_file, StoredTensor};
use super::SubjectRecord;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SERIES_ENTRY: &str = "series";
pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    subject_id: String,
    tensor_file: String,
    label: String,
    site: String,
}

/// A validated manifest row; the series itself is loaded on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRef {
    pub id: String,
    pub path: PathBuf,
    pub label: u8,
    pub site: String,
    /// `[T, C, D, H, W]` as recorded in the file header.
    pub dims: Vec<usize>,
}

impl SubjectRef {
    pub fn len(&self) -> usize {
        self.dims[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn load<T: Scalar>(&self) -> Result<SubjectRecord<T>> {
        let entries = read_tensor_file(&self.path)?;
        let (_, stored) = entries.into_iter().next().ok_or_else(|| {
            Error::Data(format!("{}: {} holds no tensors", self.id, self.path.display()))
        })?;
        Ok(SubjectRecord {
            id: self.id.clone(),
            series: stored.to_tensor(),
            label: self.label,
            site: self.site.clone(),
        })
    }
}

/// Parses and validates a manifest, reporting every offending row at once.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SubjectRef>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;

    let mut problems = Vec::new();
    let mut refs = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        if let Some(prev) = first_line.insert(row.subject_id.clone(), line) {
            problems.push(format!(
                "duplicate subject id {:?} on lines {prev} and {line}",
                row.subject_id
            ));
            continue;
        }
        let label = match row.label.as_str() {
            "0" => 0,
            "1" => 1,
            other => {
                problems.push(format!(
                    "line {line}: subject {:?} has label {other:?}, expected 0 or 1",
                    row.subject_id
                ));
                continue;
            }
        };
        let file = base.join(&row.tensor_file);
        if !file.is_file() {
            problems.push(format!(
                "line {line}: subject {:?} tensor file {} does not exist",
                row.subject_id,
                file.display()
            ));
            continue;
        }
        let dims = match scan_tensor_file(&file) {
            Ok(infos) => match infos.into_iter().next() {
                Some(info) if info.dims.len() == 5 => info.dims,
                Some(info) => {
                    problems.push(format!(
                        "line {line}: subject {:?} series has dims {:?}, expected [T, C, D, H, W]",
                        row.subject_id, info.dims
                    ));
                    continue;
                }
                None => {
                    problems.push(format!("line {line}: subject {:?} file holds no tensors", row.subject_id));
                    continue;
                }
            },
            Err(e) => {
                problems.push(format!("line {line}: subject {:?}: {e}", row.subject_id));
                continue;
            }
        };
        refs.push(SubjectRef {
            id: row.subject_id,
            path: file,
            label,
            site: row.site,
        dims,
        });
    }

    if let Some(first) = refs.first() {
        let reference = first.dims[1..].to_vec();
        for r in &refs[1..] {
            if r.dims[1..] != reference[..] {
                problems.push(format!(
                    "subject {:?} has volume dims {:?} but subject {:?} has {:?}",
                    r.id,
                    &r.dims[1..],
                    first.id,
                    reference
                ));
            }
        }
    }
    if !problems.is_empty() {
        return Err(Error::Ingestion(problems));
    }
    if refs.is_empty() {
        return Err(Error::Data(format!("{} lists no subjects", path.display())));
    }
    Ok(refs)
}

/// Writes one ST4D file per subject plus `manifest.csv` into `dir`.
pub fn write_dataset<T: Scalar>(dir: impl AsRef<Path>, records: &[SubjectRecord<T>]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join(MANIFEST_FILE);
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| Error::Data(format!("{}: {e}", manifest.display())))?;
    for r in records {
        let file = format!("{}.st4d", r.id);
        write_tensor_file(
            dir.join(&file),
            &[(SERIES_ENTRY.to_string(), StoredTensor::from_tensor(&r.series))],
        )?;
        w.serialize(Row {
            subject_id: r.id.clone(),
            tensor_file: file,
            label: r.label.to_string(),
            site: r.site.clone(),
        })
        .map_err(|e| Error::Data(format!("{}: {e}", manifest.display())))?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

/// Resolves a dataset argument that may name either a directory or a manifest file.
pub fn manifest_path(path: impl AsRef<Path>) -> PathBuf {
    let path = path.as_ref();
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}
