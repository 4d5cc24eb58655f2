//! A small reverse-mode differentiable tensor engine and the layers the
//! models need: linear, low-rank linear, batch normalisation, dropout, MLP.

pub mod checkpoint;
pub mod layers;
pub mod matrix;
pub mod params;
pub mod tape;

pub use layers::{AnyLinear, BatchNorm, Context, Dropout, Linear, LowRankLinear, Mlp, Mode};
pub use matrix::Matrix;
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{bce_with_logit, sigmoid, BatchStats, Gradients, SparseOperator, Tape, Var};

use thiserror::Error;

fn fmt_shape(s: &(usize, usize)) -> String {
    format!("{}x{}", s.0, s.1)
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: incompatible shapes {} and {}", fmt_shape(.left), fmt_shape(.right))]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: index {index} out of range for length {len}")]
    Index { op: &'static str, index: usize, len: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("backward called before any forward computation was recorded")]
    NoForward,
    #[error("backward needs a scalar loss, got shape {}", fmt_shape(.0))]
    NotScalar((usize, usize)),
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
