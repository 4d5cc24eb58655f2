//! Per-field gradient attributions and pooled-embedding export.
//!
//! The attribution of field `v` for one document is the Euclidean norm of
//! the gradient of the predicted-class output with respect to the field's
//! selectively pooled representation. The predicted-class output is the
//! logit for class 1 and its negation for class 0.

mod attribution;
mod export;

pub use attribution::{
    aggregate_attributions, field_gradients, write_attributions, write_ranking, Attribution, AttributionFilter,
    FieldRank,
};
pub use export::{export_embeddings, write_embeddings, EmbeddingRow, GLOBAL_COMPONENT, HIDDEN_COMPONENT};

use thiserror::Error;

use crate::graph::GraphError;
use crate::model::{ModelError, Variant};
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("field attributions need a gcn_selective9 model, got {0}")]
    NotSelective(Variant),
    #[error("export needs a graph model, got {0}")]
    NotGraph(Variant),
    #[error("no documents qualify for aggregation ({0})")]
    NoQualifying(String),
    #[error("limit must be at least 1")]
    ZeroLimit,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
