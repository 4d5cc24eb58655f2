//! Trees with leaf features as graphs, mini-batches as disjoint unions.

mod batch;
mod build;
mod cache;
mod flat;

pub use batch::{batch_graphs, GraphBatch, Propagation};
pub use build::{build_graph, build_graph_from_paths, FeaturedGraph};
pub use cache::{read_graphs, write_graphs, ABSENT};
pub use flat::{build_flat_doc, read_flat_docs, write_flat_docs, FlatDoc, N_CHANNELS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{doc_id}: feature of node {node} has width {found}, expected {expected}")]
    WidthMismatch {
        doc_id: String,
        node: String,
        found: usize,
        expected: usize,
    },
    #[error("cannot batch an empty list of graphs")]
    EmptyBatch,
    #[error("graphs in a batch must share the feature width ({0} vs {1})")]
    MixedWidths(usize, usize),
    #[error("corrupt cache record {record}: {message}")]
    Corrupt { record: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
