//! Train / validation / test assignment.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "valid" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub doc_id: String,
    pub split: Split,
    /// `None` for splits loaded from an external file.
    pub seed: Option<u64>,
}

pub const TRAIN_RATIO: f64 = 0.70;
pub const VALIDATION_RATIO: f64 = 0.15;

/// Target `(train, validation, test)` sizes for `n` documents.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = ((n as f64) * TRAIN_RATIO).round() as usize;
    let val = (((n as f64) * VALIDATION_RATIO).round() as usize).min(n - train);
    (train, val, n - train - val)
}

/// Seeded 70/15/15 assignment, returned in input order.
pub fn make_splits(doc_ids: &[String], seed: u64) -> Result<Vec<SplitAssignment>, CorpusError> {
    if doc_ids.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut seen = HashSet::with_capacity(doc_ids.len());
    for id in doc_ids {
        if !seen.insert(id.as_str()) {
            return Err(CorpusError::DuplicateId(id.clone()));
        }
    }
    let (n_train, n_val, _) = split_sizes(doc_ids.len());
    let mut order: Vec<usize> = (0..doc_ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = vec![Split::Test; doc_ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        split[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    Ok(doc_ids
        .iter()
        .zip(split)
        .map(|(id, split)| SplitAssignment {
            doc_id: id.clone(),
            split,
            seed: Some(seed),
        })
        .collect())
}

/// Writes `doc_id,split` with a header row.
pub fn write_splits<W: Write>(w: W, splits: &[SplitAssignment]) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["doc_id", "split"])?;
    for s in splits {
        wtr.write_record([s.doc_id.as_str(), s.split.name()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a `doc_id,split` file; a header row is optional.
pub fn read_splits<R: Read>(r: R) -> Result<Vec<SplitAssignment>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(CorpusError::Line {
                line: i + 1,
                message: "expected doc_id,split".into(),
            });
        }
        if i == 0 && &rec[0] == "doc_id" {
            continue;
        }
        let doc_id = rec[0].to_string();
        if !seen.insert(doc_id.clone()) {
            return Err(CorpusError::DuplicateId(doc_id));
        }
        out.push(SplitAssignment {
            doc_id,
            split: rec[1].parse()?,
            seed: None,
        });
    }
    Ok(out)
}

/// Lookup table from document id to split.
pub fn split_index(splits: &[SplitAssignment]) -> HashMap<&str, Split> {
    splits.iter().map(|s| (s.doc_id.as_str(), s.split)).collect()
}
