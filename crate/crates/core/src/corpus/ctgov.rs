//! Registry protocol ingestion: label extraction and removal of sections
//! that reveal the outcome.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::Value;

use super::label::assign_label;
use super::tree::{byte_offset, from_value, DocTree};
use super::CorpusError;
use crate::fields::normalize_key;

/// Keys (normalised) whose subtrees are dropped before building the tree.
///
/// The status module carries the overall status itself; results, derived and
/// document sections only exist or differ once a study has ended.
pub const DEFAULT_EXCLUDED: &[&str] = &[
    "status",
    "resultssection",
    "derivedsection",
    "documentsection",
    "annotationsection",
];

fn find_string<'a>(value: &'a Value, key: &str) -> Option<&'a str> {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                if k.eq_ignore_ascii_case(key) {
                    if let Value::String(s) = v {
                        return Some(s);
                    }
                }
            }
            map.values().find_map(|v| find_string(v, key))
        }
        Value::Array(items) => items.iter().find_map(|v| find_string(v, key)),
        _ => None,
    }
}

fn strip_excluded(value: &mut Value, excluded: &[&str]) {
    match value {
        Value::Object(map) => {
            map.retain(|k, _| !excluded.contains(&normalize_key(k).as_str()));
            for v in map.values_mut() {
                strip_excluded(v, excluded);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|v| strip_excluded(v, excluded)),
        _ => {}
    }
}

/// Parses one protocol document and labels it.
///
/// Returns `Ok(None)` for studies that are excluded by [`assign_label`].
/// The document id is the `NCTId` when present, otherwise `fallback_id`.
pub fn ingest_protocol(raw: &[u8], fallback_id: &str) -> Result<Option<DocTree>, CorpusError> {
    let value: Value = serde_json::from_slice(raw).map_err(|e| CorpusError::Json {
        offset: byte_offset(raw, e.line(), e.column()),
        message: e.to_string(),
    })?;
    ingest_value(value, fallback_id)
}

pub(crate) fn ingest_value(mut value: Value, fallback_id: &str) -> Result<Option<DocTree>, CorpusError> {
    let status = find_string(&value, "OverallStatus").unwrap_or("");
    let study_type = find_string(&value, "StudyType").unwrap_or("");
    let Some(label) = assign_label(status, study_type) else {
        return Ok(None);
    };
    let doc_id = find_string(&value, "NCTId").unwrap_or(fallback_id).to_string();
    strip_excluded(&mut value, DEFAULT_EXCLUDED);
    let mut tree = from_value(&value, &doc_id)?;
    tree.label = Some(label);
    Ok(Some(tree))
}

/// Summary of a directory ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub trees: Vec<DocTree>,
    pub excluded: usize,
}

/// Ingests every `*.json` file below `dir`, in sorted path order.
pub fn ingest_dir(dir: &Path) -> Result<IngestOutcome, CorpusError> {
    let mut files: Vec<PathBuf> = Vec::new();
    collect_json(dir, &mut files)?;
    files.sort();
    let parsed: Vec<Result<Option<DocTree>, CorpusError>> = files
        .par_iter()
        .map(|path| {
            let raw = fs::read(path).map_err(|e| CorpusError::File {
                path: path.clone(),
                source: e,
            })?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            ingest_protocol(&raw, &stem).map_err(|e| CorpusError::InFile {
                path: path.clone(),
                source: Box::new(e),
            })
        })
        .collect();
    let mut trees = Vec::new();
    let mut excluded = 0;
    for p in parsed {
        match p? {
            Some(t) => trees.push(t),
            None => excluded += 1,
        }
    }
    Ok(IngestOutcome { trees, excluded })
}

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let entries = fs::read_dir(dir).map_err(|e| CorpusError::File {
        path: dir.to_path_buf(),
        source: e,
    })?;
    for entry in entries {
        let path = entry?.path();
        if path.is_dir() {
            collect_json(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            out.push(path);
        }
    }
    Ok(())
}
