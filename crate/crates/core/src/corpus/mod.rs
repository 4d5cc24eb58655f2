//! Document ingestion: parsing, labelling, splitting and synthetic corpora.

mod ctgov;
mod label;
mod split;
pub mod synth;
mod tree;

pub use ctgov::{ingest_dir, ingest_protocol, IngestOutcome, DEFAULT_EXCLUDED};
pub use label::assign_label;
pub use split::{make_splits, read_splits, split_index, split_sizes, write_splits, Split, SplitAssignment};
pub use synth::{generate_synthetic_corpus, SynthConfig};
pub use tree::{from_value, parse_document, read_trees, write_trees, DocTree, Label, TreeNode};

use std::path::PathBuf;

use thiserror::Error;

use crate::fields::UnknownField;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("empty document")]
    EmptyDocument,
    #[error("document root must be a JSON object")]
    NotAnObject,
    #[error("invalid tree {doc_id}: {message}")]
    InvalidTree { doc_id: String, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate document id {0}")]
    DuplicateId(String),
    #[error("unknown split {0:?} (expected train, validation or test)")]
    UnknownSplit(String),
    #[error(transparent)]
    UnknownField(#[from] UnknownField),
    #[error("synthetic corpus: {0}")]
    Synth(String),
    #[error("serialisation failed: {0}")]
    Serialize(String),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    InFile { path: PathBuf, source: Box<CorpusError> },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
