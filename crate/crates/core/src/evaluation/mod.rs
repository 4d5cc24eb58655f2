//! Confusion counts, precision / recall / F1, ROC AUC and scoring of a
//! trained model.

mod metrics;
mod report;

pub use metrics::{confusion, roc_auc, ClassMetrics, Confusion, Metrics};
pub use report::{evaluate, score, write_scores, EvalReport, Score, THRESHOLD};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot score an empty set")]
    Empty,
    #[error("{0} labels but {1} predictions")]
    Length(usize, usize),
    #[error("AUC undefined: only one class present")]
    SingleClass,
    #[error("document {0} has no label")]
    Unlabelled(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
