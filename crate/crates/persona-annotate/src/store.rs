//! Append-only JSONL persistence for annotation outcomes, with the manifest
//! bookkeeping that makes long campaigns resumable.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crowd::LabelTable;
use crate::datasets::BinaryLabel;
use crate::prompting::{to_binary, to_likert, TemplateId};

/// One persisted annotation outcome. Field names are the on-disk JSONL schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    /// Backend model name.
    pub model: String,
    /// None for baseline (persona-free) runs.
    pub persona_id: Option<String>,
    pub template: TemplateId,
    pub instance_id: String,
    /// Raw backend response before parsing.
    pub raw: String,
    /// Parsed label surface string, valid for the template's schema.
    pub label: String,
    /// Hex fingerprint of the rendered prompt, for drift detection on resume.
    pub prompt_hash: String,
}

impl RunRecord {
    pub fn key(&self) -> (String, String) {
        (self.run_id.clone(), self.instance_id.clone())
    }

    pub fn binary_label(&self) -> Option<BinaryLabel> {
        to_binary(&self.label)
    }

    pub fn likert_label(&self) -> Option<u8> {
        to_likert(&self.label)
    }
}

/// What a campaign is expected to produce: the cross product of run ids and
/// instance ids, stored in factored form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    /// Raw config text the campaign was launched with.
    pub config_snapshot: String,
    pub run_ids: Vec<String>,
    pub instance_ids: Vec<String>,
}

impl RunManifest {
    pub fn expected_len(&self) -> usize {
        self.run_ids.len() * self.instance_ids.len()
    }

    pub fn expected(&self) -> impl Iterator<Item = (&str, &str)> {
        self.run_ids.iter().flat_map(move |r| {
            self.instance_ids
                .iter()
                .map(move |i| (r.as_str(), i.as_str()))
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<RunManifest, StoreError> {
        let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store {path}:{line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate record for run {run_id:?} instance {instance_id:?}")]
    Duplicate { run_id: String, instance_id: String },
    #[error("record label {label:?} is not legal for template {template}")]
    IllegalLabel { label: String, template: TemplateId },
}

/// Append-only JSONL store, one record per line. Single writer; readers open
/// the file independently. A malformed final line (a crash artifact) is
/// truncated away on open; malformed earlier lines are hard errors.
#[derive(Debug)]
pub struct RunStore {
    path: PathBuf,
    file: File,
    records: Vec<RunRecord>,
    index: HashMap<(String, String), usize>,
}

fn validate_label(record: &RunRecord) -> Result<(), StoreError> {
    if record.template.schema().contains(&record.label) {
        Ok(())
    } else {
        Err(StoreError::IllegalLabel {
            label: record.label.clone(),
            template: record.template,
        })
    }
}

/// Parse store text into records, returning how many leading bytes held
/// well-formed lines. A malformed or blank final line (a crash artifact from
/// an interrupted append) is excluded rather than rejected; malformed earlier
/// lines are hard errors. `origin` names the source in error messages.
pub fn parse_store(content: &str, origin: &str) -> Result<(Vec<RunRecord>, usize), StoreError> {
    let mut records = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    let lines: Vec<&str> = content.lines().collect();
    let mut good_bytes = 0usize;
    for (idx, line) in lines.iter().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            // Whitespace-only line: tolerate at the end, reject elsewhere.
            if idx + 1 == lines.len() {
                break;
            }
            return Err(StoreError::Corrupt {
                path: origin.to_string(),
                line: lineno,
                message: "blank line inside store".into(),
            });
        }
        let parsed: Result<RunRecord, _> = serde_json::from_str(line);
        match parsed {
            Ok(record) => {
                validate_label(&record)?;
                let key = record.key();
                if seen.contains_key(&key) {
                    return Err(StoreError::Corrupt {
                        path: origin.to_string(),
                        line: lineno,
                        message: format!(
                            "duplicate key ({}, {})",
                            record.run_id, record.instance_id
                        ),
                    });
                }
                seen.insert(key, records.len());
                records.push(record);
                good_bytes += line.len() + 1;
            }
            Err(e) => {
                if idx + 1 == lines.len() {
                    // Torn final line from an interrupted append: drop it.
                    break;
                }
                return Err(StoreError::Corrupt {
                    path: origin.to_string(),
                    line: lineno,
                    message: e.to_string(),
                });
            }
        }
    }
    // The per-line tally assumes a trailing newline; a file ending mid-line
    // without one would otherwise count a byte that is not there.
    Ok((records, good_bytes.min(content.len())))
}

impl RunStore {
    /// Open a store, creating the file if absent and loading existing records.
    pub fn open(path: &Path) -> Result<RunStore, StoreError> {
        let path_str = path.display().to_string();
        let content = match fs::read_to_string(path) {
            Ok(c) => c,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(source) => {
                return Err(StoreError::Io {
                    path: path_str,
                    source,
                })
            }
        };
        let (records, good_bytes) = parse_store(&content, &path_str)?;
        let mut index = HashMap::new();
        for (i, record) in records.iter().enumerate() {
            index.insert(record.key(), i);
        }
        if good_bytes < content.len() {
            // Truncate away the torn tail so future appends start clean.
            let file = OpenOptions::new().write(true).open(path).map_err(|source| {
                StoreError::Io {
                    path: path_str.clone(),
                    source,
                }
            })?;
            file.set_len(good_bytes as u64).map_err(|source| StoreError::Io {
                path: path_str.clone(),
                source,
            })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| StoreError::Io {
                path: path_str,
                source,
            })?;
        Ok(RunStore {
            path: path.to_path_buf(),
            file,
            records,
            index,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn contains(&self, run_id: &str, instance_id: &str) -> bool {
        self.index
            .contains_key(&(run_id.to_string(), instance_id.to_string()))
    }

    pub fn get(&self, run_id: &str, instance_id: &str) -> Option<&RunRecord> {
        self.index
            .get(&(run_id.to_string(), instance_id.to_string()))
            .map(|&i| &self.records[i])
    }

    /// Durable single-record append; duplicates are rejected before touching
    /// the file.
    pub fn append(&mut self, record: RunRecord) -> Result<(), StoreError> {
        validate_label(&record)?;
        let key = record.key();
        if self.index.contains_key(&key) {
            return Err(StoreError::Duplicate {
                run_id: record.run_id,
                instance_id: record.instance_id,
            });
        }
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|source| StoreError::Io {
                path: self.path.display().to_string(),
                source,
            })?;
        self.index.insert(key, self.records.len());
        self.records.push(record);
        Ok(())
    }

    /// Expected-minus-present keys, in manifest order; drives resumption.
    pub fn missing(&self, manifest: &RunManifest) -> Vec<(String, String)> {
        manifest
            .expected()
            .filter(|(r, i)| !self.contains(r, i))
            .map(|(r, i)| (r.to_string(), i.to_string()))
            .collect()
    }

    /// Binary view of the stored labels for the given runs; records whose
    /// label is not binary are skipped.
    pub fn binary_label_table(&self, run_ids: &[String]) -> LabelTable {
        let wanted: std::collections::HashSet<&str> =
            run_ids.iter().map(|s| s.as_str()).collect();
        let mut table = LabelTable::default();
        for record in &self.records {
            if wanted.contains(record.run_id.as_str()) {
                if let Some(label) = record.binary_label() {
                    table.insert(&record.run_id, &record.instance_id, label);
                }
            }
        }
        table
    }
}
