use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::labels::{Label, Task};

pub const MANIFEST_HEADER: [&str; 4] = ["id", "path", "label", "dataset"];

/// One track of a dataset listing.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    /// Audio file or cached spectrogram.
    pub path: PathBuf,
    pub label: Label,
    pub dataset: String,
}

/// Parses manifest CSV; relative paths are joined onto `base` when given.
pub fn parse_manifest<R: Read>(reader: R, task: Task, base: Option<&Path>) -> Result<Vec<ManifestEntry>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers().map_err(|e| Error::Manifest { line: 1, msg: e.to_string() })?;
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::Manifest {
            line: 1,
            msg: format!("header must be {:?}, found {:?}", MANIFEST_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| Error::Manifest {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(Error::Manifest { line, msg: "empty id".into() });
        }
        let label = Label::parse(task, field(2)).map_err(|e| Error::Manifest { line, msg: e.to_string() })?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let raw = PathBuf::from(field(1));
        let path = match base {
            Some(b) if raw.is_relative() => b.join(raw),
            _ => raw,
        };
        entries.push(ManifestEntry {
            id,
            path,
            label,
            dataset: field(3).to_string(),
        });
    }
    Ok(entries)
}

/// Loads a manifest, resolving relative paths against its directory.
pub fn load_manifest(path: impl AsRef<Path>, task: Task) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(file, task, path.parent())
}

pub fn write_manifest_to<W: Write>(writer: W, entries: &[ManifestEntry]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| Error::Serde(e.to_string());
    csv.write_record(MANIFEST_HEADER).map_err(ser)?;
    for e in entries {
        csv.write_record([e.id.as_str(), &e.path.to_string_lossy(), &e.label.to_string(), e.dataset.as_str()])
            .map_err(ser)?;
    }
    csv.flush().map_err(|e| Error::Serde(e.to_string()))
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest_to(file, entries)
}
