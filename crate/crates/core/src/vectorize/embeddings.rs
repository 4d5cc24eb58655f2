use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::VectorizeError;

/// One line of a feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub doc_id: String,
    pub node_path: String,
    pub vector: Vec<f64>,
}

/// Vectors of uniform width keyed by document id and node path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Embeddings {
    dim: usize,
    docs: HashMap<String, HashMap<String, Vec<f64>>>,
    len: usize,
}

impl Embeddings {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, doc_id: &str, node_path: &str) -> Option<&[f64]> {
        self.docs.get(doc_id)?.get(node_path).map(Vec::as_slice)
    }

    /// Collects in-memory records under the same checks as [`read_embeddings`].
    pub fn from_records<I: IntoIterator<Item = FeatureRecord>>(records: I) -> Result<Self, VectorizeError> {
        let mut out = Self::default();
        for (i, rec) in records.into_iter().enumerate() {
            out.insert(rec, i + 1)?;
        }
        if out.is_empty() {
            return Err(VectorizeError::NoVectors);
        }
        Ok(out)
    }

    /// All vectors of one document, keyed by node path.
    pub fn doc(&self, doc_id: &str) -> Option<&HashMap<String, Vec<f64>>> {
        self.docs.get(doc_id)
    }

    fn insert(&mut self, rec: FeatureRecord, line: usize) -> Result<(), VectorizeError> {
        if self.len == 0 {
            self.dim = rec.vector.len();
        } else if rec.vector.len() != self.dim {
            return Err(VectorizeError::InconsistentWidth {
                line,
                found: rec.vector.len(),
                expected: self.dim,
            });
        }
        let doc = self.docs.entry(rec.doc_id).or_default();
        if doc.insert(rec.node_path.clone(), rec.vector).is_some() {
            return Err(VectorizeError::EmbeddingFormat {
                line,
                message: format!("duplicate node path {:?}", rec.node_path),
            });
        }
        self.len += 1;
        Ok(())
    }
}

/// Reads `{"doc_id", "node_path", "vector"}` lines. Blank lines are skipped.
pub fn read_embeddings<R: BufRead>(r: R) -> Result<Embeddings, VectorizeError> {
    let mut out = Embeddings::default();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FeatureRecord = serde_json::from_str(&line).map_err(|e| VectorizeError::EmbeddingFormat {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(rec, i + 1)?;
    }
    if out.is_empty() {
        return Err(VectorizeError::NoVectors);
    }
    Ok(out)
}

pub fn load_embeddings(path: &Path) -> Result<Embeddings, VectorizeError> {
    let f = File::open(path).map_err(|e| VectorizeError::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_embeddings(BufReader::new(f))
}

pub fn write_features<W: Write>(mut w: W, records: &[FeatureRecord]) -> Result<(), VectorizeError> {
    for rec in records {
        serde_json::to_writer(&mut w, rec).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
