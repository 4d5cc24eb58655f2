//! Classification of hierarchical text documents represented as trees.
//!
//! Leaves carry free-text features, internal nodes start at zero, a GCN
//! propagates information from leaves to the root, and node representations
//! are pooled globally (mean), selectively (concatenation of a fixed list of
//! known nodes), or both before an MLP head produces one logit.

pub mod corpus;
pub mod evaluation;
pub mod explain;
pub mod fields;
pub mod graph;
pub mod model;
pub mod nn;
pub mod trainer;
pub mod vectorize;
