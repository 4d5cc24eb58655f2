//! Standard layers built on the tape.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use super::params::{xavier_uniform, Bound, ParamId, ParamStore};
use super::tape::{BatchStats, Tape, Var};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-forward state: mode, dropout randomness, pending batch-norm updates.
#[derive(Debug)]
pub struct Context {
    pub mode: Mode,
    rng: ChaCha8Rng,
    bn_updates: Vec<(BatchNorm, BatchStats)>,
}

impl Context {
    pub fn train(seed: u64) -> Self {
        Self {
            mode: Mode::Train,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bn_updates: Vec::new(),
        }
    }

    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            rng: ChaCha8Rng::seed_from_u64(0),
            bn_updates: Vec::new(),
        }
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }

    /// Folds the batch statistics gathered during forward into the running buffers.
    pub fn apply_running_stats(&mut self, store: &mut ParamStore) {
        for (bn, stats) in self.bn_updates.drain(..) {
            bn.update_running(store, &stats);
        }
    }
}

/// `y = x Wᵀ + b` with `W: out × in`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.matrix(format!("{name}.weight"), xavier_uniform(out_dim, in_dim, rng));
        let bias = store.vector(format!("{name}.bias"), vec![0.0; out_dim]);
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, NnError> {
        let y = tape.matmul_t(x, bound.var(self.weight))?;
        tape.add_row(y, bound.var(self.bias))
    }
}

/// `y = x Vᵀ Uᵀ + b` with `U: out × r`, `V: r × in`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowRankLinear {
    pub u: ParamId,
    pub v: ParamId,
    pub bias: ParamId,
    pub rank: usize,
}

impl LowRankLinear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rank: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if rank == 0 || rank > in_dim.min(out_dim) {
            return Err(NnError::Config(format!(
                "low-rank layer {name}: rank {rank} must be in 1..=min({in_dim}, {out_dim})"
            )));
        }
        let u = store.matrix(format!("{name}.u"), xavier_uniform(out_dim, rank, rng));
        let v = store.matrix(format!("{name}.v"), xavier_uniform(rank, in_dim, rng));
        let bias = store.vector(format!("{name}.bias"), vec![0.0; out_dim]);
        Ok(Self { u, v, bias, rank })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, NnError> {
        let h = tape.matmul_t(x, bound.var(self.v))?;
        let y = tape.matmul_t(h, bound.var(self.u))?;
        tape.add_row(y, bound.var(self.bias))
    }

    /// The equivalent dense weight `U V`.
    pub fn dense_weight(&self, store: &ParamStore) -> Matrix {
        store.get(self.u).matmul(store.get(self.v))
    }
}

/// Either a dense or a low-rank first layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnyLinear {
    Dense(Linear),
    LowRank(LowRankLinear),
}

impl AnyLinear {
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, NnError> {
        match self {
            Self::Dense(l) => l.forward(tape, bound, x),
            Self::LowRank(l) => l.forward(tape, bound, x),
        }
    }
}

/// Batch normalisation over rows, with learnable affine and running statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.vector(format!("{name}.gamma"), vec![1.0; dim]),
            beta: store.vector(format!("{name}.beta"), vec![0.0; dim]),
            running_mean: store.buffer(format!("{name}.running_mean"), vec![0.0; dim]),
            running_var: store.buffer(format!("{name}.running_var"), vec![1.0; dim]),
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        store: &ParamStore,
        x: Var,
        ctx: &mut Context,
    ) -> Result<Var, NnError> {
        let normalised = match ctx.mode {
            Mode::Train => {
                let (y, stats) = tape.batch_norm(x, self.eps)?;
                ctx.bn_updates.push((*self, stats));
                y
            }
            Mode::Eval => {
                let mean = store.get(self.running_mean).as_slice();
                let inv_std: Vec<f64> = store
                    .get(self.running_var)
                    .as_slice()
                    .iter()
                    .map(|v| 1.0 / (v + self.eps).sqrt())
                    .collect();
                tape.affine_const(x, mean, &inv_std)?
            }
        };
        let scaled = tape.mul_cols(normalised, bound.var(self.gamma))?;
        tape.add_row(scaled, bound.var(self.beta))
    }

    fn update_running(&self, store: &mut ParamStore, stats: &BatchStats) {
        let m = self.momentum;
        let correction = if stats.n > 1 {
            stats.n as f64 / (stats.n - 1) as f64
        } else {
            1.0
        };
        for (r, b) in store
            .get_mut(self.running_mean)
            .as_mut_slice()
            .iter_mut()
            .zip(&stats.mean)
        {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in store
            .get_mut(self.running_var)
            .as_mut_slice()
            .iter_mut()
            .zip(&stats.var)
        {
            *r = (1.0 - m) * *r + m * b * correction;
        }
    }
}

/// Inverted dropout: retained activations are scaled by `1 / (1 - p)` in training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn forward(&self, tape: &mut Tape, x: Var, ctx: &mut Context) -> Result<Var, NnError> {
        if ctx.mode == Mode::Eval || self.p == 0.0 {
            return Ok(x);
        }
        let (rows, cols) = tape.value(x).shape();
        let keep = 1.0 - self.p;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| if ctx.rng.random::<f64>() < keep { scale } else { 0.0 })
            .collect();
        tape.mul_const(x, Arc::new(Matrix::from_vec(rows, cols, mask)))
    }
}

/// One hidden block: linear, batch norm, relu, dropout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpBlock {
    pub linear: AnyLinear,
    pub norm: BatchNorm,
    pub dropout: Dropout,
}

/// Hidden blocks followed by a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub blocks: Vec<MlpBlock>,
    pub output: Linear,
}

impl Mlp {
    /// Builds `in → hidden[0] → … → out`. With `low_rank = Some(r)` the first
    /// linear map is factorised.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        dropout: f64,
        low_rank: Option<usize>,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut blocks = Vec::with_capacity(hidden.len());
        let mut prev = in_dim;
        for (i, &h) in hidden.iter().enumerate() {
            let lname = format!("{name}.{i}");
            let linear = match (i, low_rank) {
                (0, Some(r)) => AnyLinear::LowRank(LowRankLinear::new(store, &lname, prev, h, r, rng)?),
                _ => AnyLinear::Dense(Linear::new(store, &lname, prev, h, rng)),
            };
            let norm = BatchNorm::new(store, &format!("{name}.{i}.bn"), h);
            blocks.push(MlpBlock {
                linear,
                norm,
                dropout: Dropout { p: dropout },
            });
            prev = h;
        }
        let output = Linear::new(store, &format!("{name}.out"), prev, out_dim, rng);
        Ok(Self { blocks, output })
    }

    /// Returns the output and the activation of every hidden block.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        store: &ParamStore,
        x: Var,
        ctx: &mut Context,
    ) -> Result<(Var, Vec<Var>), NnError> {
        let mut h = x;
        let mut hidden = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let z = block.linear.forward(tape, bound, h)?;
            let z = block.norm.forward(tape, bound, store, z, ctx)?;
            let z = tape.relu(z);
            hidden.push(z);
            h = block.dropout.forward(tape, z, ctx)?;
        }
        let out = self.output.forward(tape, bound, h)?;
        Ok((out, hidden))
    }
}
