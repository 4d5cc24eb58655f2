//! GCN classifiers with global, selective and mixed pooling, and the flat
//! baselines.

mod config;
mod data;
mod net;

pub use config::{ModelConfig, Pooling, Variant, MLP_BLOCK_ORDER};
pub use data::{Batch, Dataset, FlatBatch};
pub use net::{Forward, Model, CHECKPOINT_FILE, CONFIG_FILE};

use thiserror::Error;

use crate::graph::GraphError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input does not fit the model: {0}")]
    Input(String),
    #[error("unknown model variant {0:?} (expected flat1, flat9, gcn_global or gcn_selective9)")]
    UnknownVariant(String),
    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
