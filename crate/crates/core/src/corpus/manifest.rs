//! JSON Lines manifests: one utterance per line with fields
//! `utt_id, features, canonical, annotated, l1, l2`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::features::FeatureMatrix;
use crate::error::{Error, Result};
use crate::phonemes::PhonemeInventory;

/// Where an utterance's acoustic features live.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureSource {
    File(PathBuf),
    Inline(Vec<Vec<f32>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub features: FeatureSource,
    pub canonical: Vec<String>,
    pub annotated: Vec<String>,
    pub l1: String,
    pub l2: String,
}

impl UtteranceRecord {
    pub fn load_features(&self) -> Result<FeatureMatrix> {
        match &self.features {
            FeatureSource::File(p) => FeatureMatrix::load(p),
            FeatureSource::Inline(rows) => FeatureMatrix::from_rows(rows),
        }
    }

    /// Field-level checks, optionally against an inventory whose languages
    /// are the admissible target languages.
    pub fn validate(&self, inventory: Option<&PhonemeInventory>) -> Result<()> {
        if self.utt_id.is_empty() {
            return Err(Error::Validation("empty utt_id".into()));
        }
        if self.canonical.is_empty() {
            return Err(Error::Validation(format!("{}: canonical sequence is empty", self.utt_id)));
        }
        if self.annotated.is_empty() {
            return Err(Error::Validation(format!("{}: annotated sequence is empty", self.utt_id)));
        }
        if let FeatureSource::Inline(rows) = &self.features {
            FeatureMatrix::from_rows(rows)
                .map_err(|e| Error::Validation(format!("{}: {e}", self.utt_id)))?;
        }
        if let Some(inv) = inventory {
            if !inv.languages().contains(&self.l2) {
                return Err(Error::Validation(format!(
                    "{}: target language {} is not configured",
                    self.utt_id, self.l2
                )));
            }
            for (field, seq) in [("canonical", &self.canonical), ("annotated", &self.annotated)] {
                inv.encode(seq)
                    .map_err(|e| Error::Validation(format!("{}: {field}: {e}", self.utt_id)))?;
            }
        }
        Ok(())
    }
}

const FIELDS: [&str; 6] = ["utt_id", "features", "canonical", "annotated", "l1", "l2"];

fn parse_line(line: &str, path: &Path, lineno: usize, base: &Path) -> Result<UtteranceRecord> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: lineno,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: lineno,
        message: "record is not a JSON object".into(),
    })?;
    for field in FIELDS {
        if !obj.contains_key(field) {
            return Err(Error::Validation(format!(
                "{}:{lineno}: missing field \"{field}\"",
                path.display()
            )));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(Error::Validation(format!(
            "{}:{lineno}: unexpected field \"{extra}\"",
            path.display()
        )));
    }
    let mut record: UtteranceRecord = serde_json::from_value(value).map_err(|e| {
        Error::Validation(format!("{}:{lineno}: {e}", path.display()))
    })?;
    if let FeatureSource::File(p) = &record.features {
        if p.is_relative() {
            record.features = FeatureSource::File(base.join(p));
        }
    }
    Ok(record)
}

/// Reads a manifest. Relative feature paths resolve against the manifest's
/// directory. With an inventory, every phoneme must resolve.
pub fn load_manifest(path: &Path, inventory: Option<&PhonemeInventory>) -> Result<Vec<UtteranceRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line(line, path, lineno, &base)?;
        record.validate(inventory).map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("{}:{lineno}: {msg}", path.display())),
            other => other,
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn manifest_to_string(records: &[UtteranceRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, records: &[UtteranceRecord]) -> Result<()> {
    crate::io::write_atomic(path, manifest_to_string(records)?.as_bytes())
}
