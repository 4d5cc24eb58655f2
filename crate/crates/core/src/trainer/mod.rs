//! Class-balanced binary cross-entropy, Adam and the training loop with
//! validation-based model selection.

mod adam;
mod fit;
mod loss;

pub use adam::Adam;
pub use fit::{read_history, train, write_history, EpochRecord, TrainConfig, TrainOutcome};
pub use loss::{class_priors, class_weights, weighted_bce};

use thiserror::Error;

use crate::evaluation::EvalError;
use crate::model::ModelError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("class {class} occurs but its prior is zero")]
    ZeroPrior { class: usize },
    #[error("{0} and {1} values differ in length")]
    Length(usize, usize),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("training document {0} has no label")]
    Unlabelled(String),
    #[error(
        "loss diverged (value {loss}) at epoch {epoch}, batch {batch}; try a lower learning rate or gradient clipping"
    )]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
