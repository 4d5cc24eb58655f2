use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use super::build::FeaturedGraph;
use super::GraphError;
use crate::corpus::Label;
use crate::fields::N_FIELDS;
use crate::nn::{Matrix, SparseOperator};

/// Neighbourhood and normalisation of one message-passing step. All
/// variants include a self-loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    /// `(x_u + Σ_children x_v) / (|C(u)| + 1)`: information flows leaf → root.
    #[default]
    ChildrenMean,
    /// Mean over self, children and parent.
    UndirectedMean,
    /// `D̂^{-1/2} (A + I) D̂^{-1/2}` on the undirected tree.
    Symmetric,
}

/// Disjoint union of graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    pub features: Matrix,
    pub edges: Vec<(usize, usize)>,
    pub graph_id: Vec<usize>,
    /// Start of each graph's node range, plus the total node count.
    pub offsets: Vec<usize>,
    /// Selective nodes with batch-global indices.
    pub selective: Vec<[Option<usize>; N_FIELDS]>,
    pub labels: Vec<Option<Label>>,
    pub doc_ids: Vec<String>,
}

pub fn batch_graphs<G: Borrow<FeaturedGraph>>(graphs: &[G]) -> Result<GraphBatch, GraphError> {
    let first = graphs.first().ok_or(GraphError::EmptyBatch)?.borrow();
    let d = first.dim();
    let n_total: usize = graphs.iter().map(|g| g.borrow().n_nodes()).sum();
    let mut data = Vec::with_capacity(n_total * d);
    let mut edges = Vec::with_capacity(n_total.saturating_sub(graphs.len()));
    let mut graph_id = Vec::with_capacity(n_total);
    let mut offsets = Vec::with_capacity(graphs.len() + 1);
    let mut selective = Vec::with_capacity(graphs.len());
    let mut labels = Vec::with_capacity(graphs.len());
    let mut doc_ids = Vec::with_capacity(graphs.len());
    let mut offset = 0;
    for (gi, g) in graphs.iter().enumerate() {
        let g = g.borrow();
        if g.dim() != d {
            return Err(GraphError::MixedWidths(d, g.dim()));
        }
        offsets.push(offset);
        data.extend_from_slice(g.features.as_slice());
        edges.extend(g.edges.iter().map(|&(c, p)| (c + offset, p + offset)));
        graph_id.extend(std::iter::repeat_n(gi, g.n_nodes()));
        selective.push(g.selective.map(|s| s.map(|i| i + offset)));
        labels.push(g.label);
        doc_ids.push(g.doc_id.clone());
        offset += g.n_nodes();
    }
    offsets.push(offset);
    Ok(GraphBatch {
        features: Matrix::from_vec(n_total, d, data),
        edges,
        graph_id,
        offsets,
        selective,
        labels,
        doc_ids,
    })
}

impl GraphBatch {
    pub fn n_graphs(&self) -> usize {
        self.selective.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }

    /// Row `g·9 + slot` of the gathered selective block.
    pub fn selective_index(&self) -> Vec<Option<usize>> {
        self.selective.iter().flat_map(|s| s.iter().copied()).collect()
    }

    /// Sparse operator applying one aggregation step to node features.
    pub fn propagation(&self, kind: Propagation) -> SparseOperator {
        let n = self.n_nodes();
        let mut neighbours: Vec<Vec<usize>> = (0..n).map(|u| vec![u]).collect();
        for &(c, p) in &self.edges {
            neighbours[p].push(c);
            if kind != Propagation::ChildrenMean {
                neighbours[c].push(p);
            }
        }
        for nb in &mut neighbours {
            nb.sort_unstable();
        }
        let deg: Vec<f64> = neighbours.iter().map(|nb| nb.len() as f64).collect();
        let rows = neighbours
            .iter()
            .enumerate()
            .map(|(u, nb)| {
                nb.iter()
                    .map(|&v| {
                        let w = match kind {
                            Propagation::Symmetric => 1.0 / (deg[u] * deg[v]).sqrt(),
                            _ => 1.0 / deg[u],
                        };
                        (v, w)
                    })
                    .collect()
            })
            .collect();
        SparseOperator::from_rows(n, rows)
    }

    /// Labels as 0/1 floats; `None` if any label is unknown.
    pub fn targets(&self) -> Option<Vec<f64>> {
        self.labels.iter().map(|l| l.map(Label::as_f64)).collect()
    }
}
