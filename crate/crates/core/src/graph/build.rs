use std::collections::HashMap;

use super::GraphError;
use crate::corpus::{DocTree, Label};
use crate::fields::N_FIELDS;
use crate::nn::Matrix;

/// A document tree with one feature row per node and child → parent edges.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturedGraph {
    pub doc_id: String,
    /// `n_nodes × d`; rows of internal nodes are zero.
    pub features: Matrix,
    /// `(child, parent)` pairs, `n_nodes − 1` of them.
    pub edges: Vec<(usize, usize)>,
    /// Node of each canonical field, in canonical order.
    pub selective: [Option<usize>; N_FIELDS],
    pub label: Option<Label>,
}

impl FeaturedGraph {
    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Children of every node.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_nodes()];
        for &(c, p) in &self.edges {
            out[p].push(c);
        }
        for c in &mut out {
            c.sort_unstable();
        }
        out
    }
}

/// Builds a graph from features keyed by node index. Only leaves receive
/// features; leaves without one (or with empty text) get zero rows.
pub fn build_graph(
    tree: &DocTree,
    leaf_features: &HashMap<usize, Vec<f64>>,
    d: usize,
) -> Result<FeaturedGraph, GraphError> {
    build_with(tree, d, |i| leaf_features.get(&i).map(Vec::as_slice), |i| i.to_string())
}

/// Same as [`build_graph`] with features keyed by node path.
pub fn build_graph_from_paths(
    tree: &DocTree,
    by_path: Option<&HashMap<String, Vec<f64>>>,
    d: usize,
) -> Result<FeaturedGraph, GraphError> {
    let paths = tree.paths();
    build_with(
        tree,
        d,
        |i| by_path.and_then(|m| m.get(&paths[i])).map(Vec::as_slice),
        |i| paths[i].clone(),
    )
}

fn build_with<'a>(
    tree: &DocTree,
    d: usize,
    feature: impl Fn(usize) -> Option<&'a [f64]>,
    name: impl Fn(usize) -> String,
) -> Result<FeaturedGraph, GraphError> {
    let n = tree.nodes.len();
    let mut features = Matrix::zeros(n, d);
    for node in &tree.nodes {
        let has_text = node.text.as_deref().is_some_and(|t| !t.is_empty());
        if !has_text {
            continue;
        }
        if let Some(v) = feature(node.index) {
            if v.len() != d {
                return Err(GraphError::WidthMismatch {
                    doc_id: tree.doc_id.clone(),
                    node: name(node.index),
                    found: v.len(),
                    expected: d,
                });
            }
            features.row_mut(node.index).copy_from_slice(v);
        }
    }
    let mut edges: Vec<(usize, usize)> = tree
        .nodes
        .iter()
        .filter_map(|n| n.parent.map(|p| (n.index, p)))
        .collect();
    edges.sort_unstable_by(|a, b| b.cmp(a));
    Ok(FeaturedGraph {
        doc_id: tree.doc_id.clone(),
        features,
        edges,
        selective: tree.field_nodes(),
        label: tree.label,
    })
}
