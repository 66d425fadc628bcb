//! Input dataset manifests and output records with augmentation provenance.
//!
//! Both files are line-delimited JSON: one object per line, blank lines
//! ignored. Relative image paths in an input manifest resolve against the
//! manifest's own directory.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GenMixError, Result};
use crate::image::probe_image;
use crate::mask::MaskKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

/// Ordered, immutable list of dataset entries with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(GenMixError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }
}

/// An entry dropped at load time because its image could not be read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntryError {
    pub line: usize,
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rejected: Vec<EntryError>,
}

impl LoadReport {
    pub fn is_clean(&self) -> bool {
        self.rejected.is_empty()
    }
}

/// Read an input manifest, checking every image header.
///
/// Structural problems (bad JSON, duplicate ids) fail the whole load;
/// unreadable images only drop their entry and are listed in the report.
pub fn load_manifest(path: &Path) -> Result<(Manifest, LoadReport)> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry =
            serde_json::from_str(&line).map_err(|e| GenMixError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        if entry.id.is_empty() {
            return Err(GenMixError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: "empty id".into(),
            });
        }
        if !seen.insert(entry.id.clone()) {
            return Err(GenMixError::DuplicateId(entry.id));
        }
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
        match probe_image(&entry.path) {
            Ok(_) => entries.push(entry),
            Err(e) => report.rejected.push(EntryError {
                line: line_no,
                id: entry.id,
                message: e.to_string(),
            }),
        }
    }
    Ok((Manifest { entries }, report))
}

/// One augmented sample (or a rejected / failed attempt) with the provenance
/// needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    /// `None` when no image was composed (filter rejection or backend failure).
    pub out_path: Option<String>,
    pub source_id: String,
    /// Augmentation index `1..=m` for this source.
    pub index: u32,
    #[serde(default)]
    pub label: Option<String>,
    pub prompt_id: String,
    pub mask_kind: MaskKind,
    pub fractal_id: String,
    pub lambda: f64,
    pub blend_width: usize,
    pub seed: u64,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AugmentedRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| {
            Err(GenMixError::InvalidRecord {
                source_id: self.source_id.clone(),
                message: message.to_string(),
            })
        };
        if self.source_id.is_empty() {
            return bad("empty source_id");
        }
        if !(self.lambda.is_finite() && (0.0..1.0).contains(&self.lambda)) {
            return Err(GenMixError::InvalidRecord {
                source_id: self.source_id.clone(),
                message: format!("lambda {} outside [0, 1)", self.lambda),
            });
        }
        if self.accepted && self.out_path.is_none() {
            return bad("accepted record without an output path");
        }
        if self.index == 0 {
            return bad("augmentation index starts at 1");
        }
        Ok(())
    }

    /// Resume key: one record per (source, augmentation index).
    pub fn key(&self) -> (&str, u32) {
        (&self.source_id, self.index)
    }
}

/// Check record invariants, optionally against the manifest they came from.
pub fn validate_records(records: &[AugmentedRecord], manifest: Option<&Manifest>) -> Result<()> {
    for r in records {
        r.validate()?;
        if let Some(m) = manifest {
            if !m.contains(&r.source_id) {
                return Err(GenMixError::InvalidRecord {
                    source_id: r.source_id.clone(),
                    message: "source_id not in manifest".into(),
                });
            }
        }
    }
    Ok(())
}

/// Write records as line-delimited JSON. Nothing is written if any record is
/// invalid; the file is replaced atomically.
pub fn write_output_manifest(records: &[AugmentedRecord], path: &Path) -> Result<usize> {
    validate_records(records, None)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| GenMixError::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(records.len())
}

pub fn load_output_manifest(path: &Path) -> Result<Vec<AugmentedRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AugmentedRecord =
            serde_json::from_str(&line).map_err(|e| GenMixError::MalformedLine {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        out.push(rec);
    }
    Ok(out)
}
