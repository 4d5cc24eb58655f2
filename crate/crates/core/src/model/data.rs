use super::ModelError;
use crate::corpus::Label;
use crate::fields::{Field, N_FIELDS};
use crate::graph::{batch_graphs, FeaturedGraph, FlatDoc, GraphBatch};
use crate::nn::Matrix;

/// Inputs of the flat baselines for a mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatBatch {
    /// `B × d` whole-document vectors.
    pub whole: Matrix,
    /// `(B·9) × d` field vectors, row `g·9 + slot`.
    pub fields: Matrix,
    pub labels: Vec<Option<Label>>,
    pub doc_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    Graphs(GraphBatch),
    Flat(FlatBatch),
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> &[Option<Label>] {
        match self {
            Batch::Graphs(b) => &b.labels,
            Batch::Flat(b) => &b.labels,
        }
    }

    pub fn doc_ids(&self) -> &[String] {
        match self {
            Batch::Graphs(b) => &b.doc_ids,
            Batch::Flat(b) => &b.doc_ids,
        }
    }

    /// Labels as 0/1 floats; `None` if any label is unknown.
    pub fn targets(&self) -> Option<Vec<f64>> {
        self.labels().iter().map(|l| l.map(Label::as_f64)).collect()
    }
}

/// A collection of documents in the representation one model family reads.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Graphs(Vec<FeaturedGraph>),
    Flat(Vec<FlatDoc>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Graphs(g) => g.len(),
            Dataset::Flat(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_graph(&self) -> bool {
        matches!(self, Dataset::Graphs(_))
    }

    pub fn doc_id(&self, i: usize) -> &str {
        match self {
            Dataset::Graphs(g) => &g[i].doc_id,
            Dataset::Flat(f) => &f[i].doc_id,
        }
    }

    pub fn label(&self, i: usize) -> Option<Label> {
        match self {
            Dataset::Graphs(g) => g[i].label,
            Dataset::Flat(f) => f[i].label,
        }
    }

    /// Feature width, or `None` when empty.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Dataset::Graphs(g) => g.first().map(FeaturedGraph::dim),
            Dataset::Flat(f) => f.first().map(FlatDoc::dim),
        }
    }

    /// The documents at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        match self {
            Dataset::Graphs(g) => Dataset::Graphs(indices.iter().map(|&i| g[i].clone()).collect()),
            Dataset::Flat(f) => Dataset::Flat(indices.iter().map(|&i| f[i].clone()).collect()),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch, ModelError> {
        if indices.is_empty() {
            return Err(ModelError::Input("empty batch".into()));
        }
        match self {
            Dataset::Graphs(g) => {
                let members: Vec<&FeaturedGraph> = indices.iter().map(|&i| &g[i]).collect();
                Ok(Batch::Graphs(batch_graphs(&members)?))
            }
            Dataset::Flat(f) => {
                let d = f[indices[0]].dim();
                let mut whole = Vec::with_capacity(indices.len() * d);
                let mut fields = Vec::with_capacity(indices.len() * N_FIELDS * d);
                for &i in indices {
                    let doc = &f[i];
                    if doc.dim() != d {
                        return Err(ModelError::Input(format!(
                            "{}: width {} differs from {d}",
                            doc.doc_id,
                            doc.dim()
                        )));
                    }
                    whole.extend_from_slice(doc.whole());
                    for field in Field::ALL {
                        fields.extend_from_slice(doc.field(field));
                    }
                }
                Ok(Batch::Flat(FlatBatch {
                    whole: Matrix::from_vec(indices.len(), d, whole),
                    fields: Matrix::from_vec(indices.len() * N_FIELDS, d, fields),
                    labels: indices.iter().map(|&i| f[i].label).collect(),
                    doc_ids: indices.iter().map(|&i| f[i].doc_id.clone()).collect(),
                }))
            }
        }
    }

    /// Consecutive batches of at most `size` documents covering everything.
    pub fn batches(&self, size: usize) -> Result<Vec<Batch>, ModelError> {
        let idx: Vec<usize> = (0..self.len()).collect();
        idx.chunks(size.max(1)).map(|c| self.batch(c)).collect()
    }
}
