use rayon::prelude::*;

use super::embeddings::FeatureRecord;
use super::projector::{project, SparseRowMatrix};
use super::sparse::{bow_count, tfidf_reweight, TfidfVariant};
use super::tokenize::tokenize;
use super::vocab::Vocabulary;
use super::VectorizeError;
use crate::corpus::DocTree;
use crate::fields::Field;

/// Node path of the whole-document vector used by the flat baselines.
pub const FLAT_KEY: &str = "@flat";

/// Node path of the vector of one field's concatenated text.
pub fn field_key(field: Field) -> String {
    format!("@field:{}", field.name())
}

/// Tokens → counts → TF-IDF → projection, then optionally scaled to unit
/// length (on unless disabled with [`Featurizer::unit_norm`]).
#[derive(Debug, Clone, Copy)]
pub struct Featurizer<'a> {
    vocab: &'a Vocabulary,
    projector: &'a SparseRowMatrix,
    variant: TfidfVariant,
    unit_norm: bool,
}

impl<'a> Featurizer<'a> {
    pub fn new(
        vocab: &'a Vocabulary,
        projector: &'a SparseRowMatrix,
        variant: TfidfVariant,
    ) -> Result<Self, VectorizeError> {
        if projector.n_cols() != vocab.len() {
            return Err(VectorizeError::Dimension {
                vector: vocab.len(),
                expected: projector.n_cols(),
            });
        }
        Ok(Self {
            vocab,
            projector,
            variant,
            unit_norm: true,
        })
    }

    /// Whether projected vectors are rescaled to unit Euclidean norm.
    pub fn unit_norm(mut self, on: bool) -> Self {
        self.unit_norm = on;
        self
    }

    pub fn dim(&self) -> usize {
        self.projector.n_rows()
    }

    /// `None` when no in-vocabulary token survives reweighting, or when the
    /// projection is exactly zero.
    pub fn vector<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Option<Vec<f64>>, VectorizeError> {
        let x = tfidf_reweight(&bow_count(tokens, self.vocab), self.vocab, self.variant)?;
        if x.is_zero() {
            return Ok(None);
        }
        let mut v = project(&x, self.projector)?;
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(None);
        }
        if self.unit_norm {
            v.iter_mut().for_each(|a| *a /= norm);
        }
        Ok(Some(v))
    }

    /// One record per leaf with a nonzero vector, then the whole-document
    /// vector and one vector per present field.
    pub fn featurize(&self, tree: &DocTree) -> Result<Vec<FeatureRecord>, VectorizeError> {
        let paths = tree.paths();
        let tokens: Vec<Vec<String>> = tree
            .nodes
            .iter()
            .map(|n| n.text.as_deref().map(tokenize).unwrap_or_default())
            .collect();
        let mut out = Vec::new();
        let mut push = |node_path: String, v: Option<Vec<f64>>| {
            if let Some(vector) = v {
                out.push(FeatureRecord {
                    doc_id: tree.doc_id.clone(),
                    node_path,
                    vector,
                });
            }
        };
        for node in tree.leaves() {
            push(paths[node.index].clone(), self.vector(&tokens[node.index])?);
        }
        let gather = |nodes: Vec<usize>| -> Vec<&str> {
            nodes
                .into_iter()
                .flat_map(|i| tokens[i].iter().map(String::as_str))
                .collect()
        };
        push(
            FLAT_KEY.to_string(),
            self.vector(&gather(tree.subtree_leaves(tree.root)))?,
        );
        for (field, node) in Field::ALL.into_iter().zip(tree.field_nodes()) {
            if let Some(node) = node {
                push(field_key(field), self.vector(&gather(tree.subtree_leaves(node)))?);
            }
        }
        Ok(out)
    }

    /// Featurizes documents in parallel; output order follows `trees`.
    pub fn featurize_all(&self, trees: &[DocTree]) -> Result<Vec<FeatureRecord>, VectorizeError> {
        let per_doc: Result<Vec<Vec<FeatureRecord>>, VectorizeError> =
            trees.par_iter().map(|t| self.featurize(t)).collect();
        Ok(per_doc?.into_iter().flatten().collect())
    }
}
