//! JSONL dataset persistence: one record per line, written atomically
//! (temp file + rename) so partial writes never corrupt an output.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use unlearn_core::neighborset::QAPair;
use unlearn_core::textsim::MaskedSentence;

use crate::LabError;

/// Output record of the `mask` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub id: String,
    pub original: String,
    pub masked: String,
    pub mask_spans: Vec<(usize, usize)>,
}

impl MaskRecord {
    pub fn new(id: &str, sentence: &MaskedSentence) -> Self {
        Self {
            id: id.to_string(),
            original: sentence.original.clone(),
            masked: sentence.masked.clone(),
            mask_spans: sentence.mask_spans.clone(),
        }
    }
}

/// Writes bytes through a temp file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), LabError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))
        .map_err(|e| LabError::io(path, e))?;
    tmp.write_all(contents).map_err(|e| LabError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| LabError::io(path, e.error))?;
    Ok(())
}

/// Reads a JSONL file into typed records; line numbers are reported on
/// parse failures.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, LabError> {
    let contents = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    contents
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|source| LabError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

/// Serializes records one JSON object per line and writes atomically.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), LabError> {
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|source| LabError::Parse {
            path: path.display().to_string(),
            line: 0,
            source,
        })?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn read_qa_pairs(path: &Path) -> Result<Vec<QAPair>, LabError> {
    let pairs: Vec<QAPair> = read_jsonl(path)?;
    let mut seen = std::collections::HashSet::new();
    for pair in &pairs {
        if !seen.insert(pair.id.as_str()) {
            return Err(LabError::Invalid(format!(
                "{}: duplicate record id {:?}",
                path.display(),
                pair.id
            )));
        }
        if pair.question.is_empty() {
            return Err(LabError::Invalid(format!(
                "{}: record {:?} has an empty question",
                path.display(),
                pair.id
            )));
        }
    }
    Ok(pairs)
}

pub fn write_qa_pairs(path: &Path, pairs: &[QAPair]) -> Result<(), LabError> {
    write_jsonl(path, pairs)
}

/// Plain-text list: one entry per line, blank lines and `#` comments skipped.
pub fn read_list(path: &Path) -> Result<Vec<String>, LabError> {
    let contents = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    Ok(contents
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}
