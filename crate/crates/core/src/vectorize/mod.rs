//! Leaf text to fixed-width vectors.
//!
//! Text is tokenized, counted against a document-frequency vocabulary,
//! reweighted by TF-IDF and reduced to `d` dimensions with a sparse random
//! projection. Vectors computed elsewhere can be imported in the same
//! line-oriented format that [`write_features`] produces.

mod embeddings;
mod featurize;
mod projector;
mod sparse;
mod tokenize;
mod vocab;

pub use embeddings::{load_embeddings, read_embeddings, write_features, Embeddings, FeatureRecord};
pub use featurize::{field_key, Featurizer, FLAT_KEY};
pub use projector::{default_nonzeros, make_projector, project, read_projector, write_projector, SparseRowMatrix};
pub use sparse::{bow_count, tfidf_reweight, SparseVector, TfidfVariant};
pub use tokenize::tokenize;
pub use vocab::{build_vocabulary, build_vocabulary_from_tokens, Vocabulary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("invalid sparse vector: {0}")]
    InvalidSparse(String),
    #[error("dimension mismatch: vector has {vector}, expected {expected}")]
    Dimension { vector: usize, expected: usize },
    #[error("token index {0} has zero document frequency")]
    ZeroDocumentFrequency(usize),
    #[error("invalid projector arguments: {0}")]
    Projector(String),
    #[error("vocabulary file line {line}: {message}")]
    VocabFormat { line: usize, message: String },
    #[error("embedding line {line}: {message}")]
    EmbeddingFormat { line: usize, message: String },
    #[error("embedding width {found} at line {line} differs from {expected}")]
    InconsistentWidth { line: usize, found: usize, expected: usize },
    #[error("no vectors in embedding file")]
    NoVectors,
    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
