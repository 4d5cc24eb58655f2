use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use super::VectorizeError;

/// Sorted `(index, value)` entries with no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self, VectorizeError> {
        for (k, &(i, v)) in entries.iter().enumerate() {
            if i >= dim {
                return Err(VectorizeError::InvalidSparse(format!("index {i} >= dim {dim}")));
            }
            if k > 0 && entries[k - 1].0 >= i {
                return Err(VectorizeError::InvalidSparse("indices not strictly increasing".into()));
            }
            if v == 0.0 {
                return Err(VectorizeError::InvalidSparse(format!("stored zero at index {i}")));
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }
}

/// Occurrence counts of in-vocabulary tokens.
pub fn bow_count<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> SparseVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.get(t.as_ref()) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    SparseVector {
        dim: vocab.len(),
        entries: counts.into_iter().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfidfVariant {
    /// `(Σ_i x_i) · ln(N / df_i) · x_i`.
    #[default]
    LengthScaled,
    /// `x_i / (Σ_i x_i) · ln(N / df_i)`.
    Conventional,
}

/// Reweights raw counts by inverse document frequency. Entries that become
/// exactly zero (tokens present in every document) are dropped.
pub fn tfidf_reweight(
    x: &SparseVector,
    vocab: &Vocabulary,
    variant: TfidfVariant,
) -> Result<SparseVector, VectorizeError> {
    if x.dim != vocab.len() {
        return Err(VectorizeError::Dimension {
            vector: x.dim,
            expected: vocab.len(),
        });
    }
    let total = x.sum();
    let n = vocab.n_docs() as f64;
    let mut entries = Vec::with_capacity(x.entries.len());
    for &(i, c) in &x.entries {
        let df = vocab.doc_frequency(i);
        if df == 0 {
            return Err(VectorizeError::ZeroDocumentFrequency(i));
        }
        let idf = (n / df as f64).ln();
        let v = match variant {
            TfidfVariant::LengthScaled => total * idf * c,
            TfidfVariant::Conventional => c / total * idf,
        };
        if v != 0.0 {
            entries.push((i, v));
        }
    }
    Ok(SparseVector { dim: x.dim, entries })
}
