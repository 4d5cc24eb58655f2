//! Named parameter storage and its binding onto a tape.

use rand::Rng;

use super::matrix::Matrix;
use super::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    /// Updated by the optimiser; false for running statistics.
    pub trainable: bool,
    /// Stored as a rank-1 tensor in checkpoints (a `1 × n` matrix in memory).
    pub vector: bool,
}

/// Ordered collection of every tensor a model owns, including buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, param: Param) -> ParamId {
        assert!(
            self.by_name(&param.name).is_none(),
            "duplicate parameter name {}",
            param.name
        );
        self.entries.push(param);
        ParamId(self.entries.len() - 1)
    }

    pub fn matrix(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.push(Param {
            name: name.into(),
            value,
            trainable: true,
            vector: false,
        })
    }

    pub fn vector(&mut self, name: impl Into<String>, values: Vec<f64>) -> ParamId {
        let n = values.len();
        self.push(Param {
            name: name.into(),
            value: Matrix::from_vec(1, n, values),
            trainable: true,
            vector: true,
        })
    }

    pub fn buffer(&mut self, name: impl Into<String>, values: Vec<f64>) -> ParamId {
        let n = values.len();
        self.push(Param {
            name: name.into(),
            value: Matrix::from_vec(1, n, values),
            trainable: false,
            vector: true,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.entries[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.entries[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id)
    }

    pub fn n_trainable_values(&self) -> usize {
        self.entries.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }
}

/// Tape leaves for every entry of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn bind(tape: &mut Tape, store: &ParamStore) -> Self {
        let vars = store.entries.iter().map(|p| tape.leaf(p.value.clone())).collect();
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

/// Uniform initialisation in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data)
}
