//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node to the [`Tape`] holding its value and the
//! information its backward rule needs. [`Tape::backward`] walks the tape in
//! reverse and returns a [`Gradients`] table covering every recorded node,
//! so intermediate activations (not just parameters) can be inspected.

use std::sync::Arc;

use super::matrix::Matrix;
use super::NnError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row-sparse linear operator `y = S x`, applied to the rows of a matrix.
///
/// Used for neighbourhood aggregation: row `u` of the output is
/// `Σ w · x[v]` over the stored `(v, w)` pairs of row `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    weight: Vec<f64>,
}

impl SparseOperator {
    /// Builds the operator from per-row `(column, weight)` lists.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col = Vec::new();
        let mut weight = Vec::new();
        row_ptr.push(0);
        for entries in &rows {
            for &(c, w) in entries {
                assert!(c < n_cols, "column {c} out of range {n_cols}");
                col.push(c);
                weight.push(w);
            }
            row_ptr.push(col.len());
        }
        Self {
            n_rows: rows.len(),
            n_cols,
            row_ptr,
            col,
            weight,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col[span.clone()]
            .iter()
            .copied()
            .zip(self.weight[span].iter().copied())
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, w) in self.row_entries(r) {
                m.set(r, c, m.get(r, c) + w);
            }
        }
        m
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.n_cols);
        let mut out = Matrix::zeros(self.n_rows, x.cols());
        for r in 0..self.n_rows {
            for (c, w) in self.row_entries(r) {
                let src = x.row(c);
                for (o, s) in out.row_mut(r).iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
        out
    }

    /// `Sᵀ g`
    pub fn apply_transpose(&self, g: &Matrix) -> Matrix {
        assert_eq!(g.rows(), self.n_rows);
        let mut out = Matrix::zeros(self.n_cols, g.cols());
        for r in 0..self.n_rows {
            let src = g.row(r).to_vec();
            for (c, w) in self.row_entries(r) {
                for (o, s) in out.row_mut(c).iter_mut().zip(&src) {
                    *o += w * s;
                }
            }
        }
        out
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    AddRow(Var, Var),
    MulCols(Var, Var),
    MulConst(Var, Arc<Matrix>),
    AffineConst {
        input: Var,
        scale: Vec<f64>,
    },
    Scale(Var, f64),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    MeanRows(Var),
    SegmentMean {
        input: Var,
        segment: Arc<Vec<usize>>,
        counts: Vec<usize>,
    },
    GatherRows {
        input: Var,
        index: Arc<Vec<Option<usize>>>,
    },
    Propagate(Var, Arc<SparseOperator>),
    RowNorm(Var),
    Sum(Var),
    BatchNorm {
        input: Var,
        inv_std: Vec<f64>,
    },
    WeightedBce {
        logits: Var,
        targets: Arc<Vec<f64>>,
        weights: Arc<Vec<f64>>,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Batch statistics computed by a training-mode batch normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased variance, used for normalising the batch.
    pub var: Vec<f64>,
    pub n: usize,
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> NnError {
    NnError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", va, vb));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a `1 × cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err("add_row", va, vr));
        }
        let mut out = va.clone();
        let r = vr.as_slice();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(r) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// Multiplies column `j` of `a` by `scale[0, j]`.
    pub fn mul_cols(&mut self, a: Var, scale: Var) -> Result<Var, NnError> {
        let (va, vs) = (self.value(a), self.value(scale));
        if vs.rows() != 1 || vs.cols() != va.cols() {
            return Err(shape_err("mul_cols", va, vs));
        }
        let mut out = va.clone();
        let s = vs.as_slice();
        for i in 0..out.rows() {
            for (o, g) in out.row_mut(i).iter_mut().zip(s) {
                *o *= g;
            }
        }
        Ok(self.push(out, Op::MulCols(a, scale)))
    }

    /// Elementwise product with a constant matrix (no gradient flows into it).
    pub fn mul_const(&mut self, a: Var, mask: Arc<Matrix>) -> Result<Var, NnError> {
        let va = self.value(a);
        if va.shape() != mask.shape() {
            return Err(shape_err("mul_const", va, &mask));
        }
        let mut out = va.clone();
        for (o, m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *o *= m;
        }
        Ok(self.push(out, Op::MulConst(a, mask)))
    }

    /// `(a[:, j] - shift[j]) * scale[j]` with constant per-column coefficients.
    pub fn affine_const(&mut self, a: Var, shift: &[f64], scale: &[f64]) -> Result<Var, NnError> {
        let va = self.value(a);
        if shift.len() != va.cols() || scale.len() != va.cols() {
            return Err(NnError::ShapeMismatch {
                op: "affine_const",
                left: va.shape(),
                right: (1, shift.len().min(scale.len())),
            });
        }
        let mut out = va.clone();
        for i in 0..out.rows() {
            for ((o, m), s) in out.row_mut(i).iter_mut().zip(shift).zip(scale) {
                *o = (*o - m) * s;
            }
        }
        Ok(self.push(
            out,
            Op::AffineConst {
                input: a,
                scale: scale.to_vec(),
            },
        ))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(shape_err("matmul", va, vb));
        }
        let out = va.matmul(vb);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`; the layout used by linear layers with `out × in` weights.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(shape_err("matmul_t", va, vb));
        }
        let out = va.matmul_t(vb);
        Ok(self.push(out, Op::MatMulT(a, b)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// Horizontal concatenation.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let Some(&first) = parts.first() else {
            return Err(NnError::Empty("concat_cols"));
        };
        let rows = self.value(first).rows();
        for &p in parts {
            let vp = self.value(p);
            if vp.rows() != rows {
                return Err(shape_err("concat_cols", self.value(first), vp));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let dst = out.row_mut(r);
            let mut off = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.row(r);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Row-major reinterpretation, e.g. `(B·9) × c` to `B × 9c`.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, NnError> {
        let va = self.value(a);
        if va.len() != rows * cols {
            return Err(NnError::ShapeMismatch {
                op: "reshape",
                left: va.shape(),
                right: (rows, cols),
            });
        }
        let out = va.clone().reshaped(rows, cols);
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Column means, `1 × cols`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, NnError> {
        let va = self.value(a);
        if va.rows() == 0 {
            return Err(NnError::Empty("mean_rows"));
        }
        let mut out = Matrix::zeros(1, va.cols());
        for r in 0..va.rows() {
            for (o, v) in out.as_mut_slice().iter_mut().zip(va.row(r)) {
                *o += v;
            }
        }
        let n = va.rows() as f64;
        let out = out.map(|v| v / n);
        Ok(self.push(out, Op::MeanRows(a)))
    }

    /// Per-segment column means; `segment[r]` names the output row of input row `r`.
    ///
    /// Within a segment every column is summed in ascending value order
    /// (`f64::total_cmp`), so the result does not depend on row order at all.
    pub fn segment_mean(&mut self, a: Var, segment: Arc<Vec<usize>>, n_segments: usize) -> Result<Var, NnError> {
        let va = self.value(a);
        if segment.len() != va.rows() {
            return Err(NnError::ShapeMismatch {
                op: "segment_mean",
                left: va.shape(),
                right: (segment.len(), 1),
            });
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_segments];
        for (r, &s) in segment.iter().enumerate() {
            if s >= n_segments {
                return Err(NnError::Index {
                    op: "segment_mean",
                    index: s,
                    len: n_segments,
                });
            }
            members[s].push(r);
        }
        let counts: Vec<usize> = members.iter().map(Vec::len).collect();
        if counts.contains(&0) {
            return Err(NnError::Empty("segment_mean"));
        }
        let cols = va.cols();
        let mut out = Matrix::zeros(n_segments, cols);
        let mut column = Vec::new();
        for (s, rows) in members.iter().enumerate() {
            for c in 0..cols {
                column.clear();
                column.extend(rows.iter().map(|&r| va.get(r, c)));
                column.sort_by(f64::total_cmp);
                let total: f64 = column.iter().sum();
                out.set(s, c, total / rows.len() as f64);
            }
        }
        Ok(self.push(
            out,
            Op::SegmentMean {
                input: a,
                segment,
                counts,
            },
        ))
    }

    /// Picks rows by index; `None` yields a zero row.
    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<Option<usize>>>) -> Result<Var, NnError> {
        let va = self.value(a);
        let mut out = Matrix::zeros(index.len(), va.cols());
        for (r, idx) in index.iter().enumerate() {
            if let Some(i) = *idx {
                if i >= va.rows() {
                    return Err(NnError::Index {
                        op: "gather_rows",
                        index: i,
                        len: va.rows(),
                    });
                }
                out.row_mut(r).copy_from_slice(va.row(i));
            }
        }
        Ok(self.push(out, Op::GatherRows { input: a, index }))
    }

    /// Applies a sparse operator to the rows of `a`.
    pub fn propagate(&mut self, a: Var, op: Arc<SparseOperator>) -> Result<Var, NnError> {
        let va = self.value(a);
        if va.rows() != op.n_cols() {
            return Err(NnError::ShapeMismatch {
                op: "propagate",
                left: va.shape(),
                right: (op.n_rows(), op.n_cols()),
            });
        }
        let out = op.apply(va);
        Ok(self.push(out, Op::Propagate(a, op)))
    }

    /// Euclidean norm of every row, `rows × 1`.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let norms: Vec<f64> = (0..va.rows())
            .map(|r| va.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let out = Matrix::from_vec(va.rows(), 1, norms);
        self.push(out, Op::RowNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Standardises every column with the batch mean and biased variance.
    pub fn batch_norm(&mut self, a: Var, eps: f64) -> Result<(Var, BatchStats), NnError> {
        let va = self.value(a);
        let n = va.rows();
        if n == 0 {
            return Err(NnError::Empty("batch_norm"));
        }
        let cols = va.cols();
        let mut mean = vec![0.0; cols];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(va.row(r)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; cols];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(va.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut var {
            *s /= n as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut out = va.clone();
        for r in 0..n {
            for ((o, m), s) in out.row_mut(r).iter_mut().zip(&mean).zip(&inv_std) {
                *o = (*o - m) * s;
            }
        }
        let var_out = self.push(out, Op::BatchNorm { input: a, inv_std });
        Ok((var_out, BatchStats { mean, var, n }))
    }

    /// Mean of `weights[j] · BCE(sigmoid(logits[j]), targets[j])`, as a `1 × 1` value.
    pub fn weighted_bce_with_logits(
        &mut self,
        logits: Var,
        targets: Arc<Vec<f64>>,
        weights: Arc<Vec<f64>>,
    ) -> Result<Var, NnError> {
        let vl = self.value(logits);
        if vl.cols() != 1 || vl.rows() != targets.len() || targets.len() != weights.len() {
            return Err(NnError::ShapeMismatch {
                op: "weighted_bce_with_logits",
                left: vl.shape(),
                right: (targets.len(), 1),
            });
        }
        if targets.is_empty() {
            return Err(NnError::Empty("weighted_bce_with_logits"));
        }
        let total: f64 = vl
            .as_slice()
            .iter()
            .zip(targets.iter())
            .zip(weights.iter())
            .map(|((&z, &y), &w)| w * bce_with_logit(z, y))
            .sum();
        let out = Matrix::scalar(total / targets.len() as f64);
        Ok(self.push(
            out,
            Op::WeightedBce {
                logits,
                targets,
                weights,
            },
        ))
    }

    /// Backpropagates from a `1 × 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        self.check_var(loss)?;
        let v = self.value(loss);
        if v.shape() != (1, 1) {
            return Err(NnError::NotScalar(v.shape()));
        }
        self.backward_seeded(loss, Matrix::scalar(1.0))
    }

    /// Vector-Jacobian product: backpropagates `seed` (shaped like `output`).
    pub fn backward_seeded(&self, output: Var, seed: Matrix) -> Result<Gradients, NnError> {
        self.check_var(output)?;
        let vo = self.value(output);
        if vo.shape() != seed.shape() {
            return Err(shape_err("backward_seeded", vo, &seed));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::new();
        grads.resize_with(output.0 + 1, || None);
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn check_var(&self, v: Var) -> Result<(), NnError> {
        if self.nodes.is_empty() {
            return Err(NnError::NoForward);
        }
        if v.0 >= self.nodes.len() {
            return Err(NnError::Index {
                op: "backward",
                index: v.0,
                len: self.nodes.len(),
            });
        }
        Ok(())
    }

    fn propagate_node(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                let mut gr = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, v) in gr.as_mut_slice().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *row, gr);
            }
            Op::MulCols(a, scale) => {
                let va = self.value(*a);
                let vs = self.value(*scale).as_slice();
                let mut ga = g.clone();
                let mut gs = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (c, o) in ga.row_mut(r).iter_mut().enumerate() {
                        gs.as_mut_slice()[c] += *o * va.get(r, c);
                        *o *= vs[c];
                    }
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *scale, gs);
            }
            Op::MulConst(a, mask) => {
                let mut ga = g.clone();
                for (o, m) in ga.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *o *= m;
                }
                accumulate(grads, *a, ga);
            }
            Op::AffineConst { input, scale } => {
                let mut ga = g.clone();
                for r in 0..ga.rows() {
                    for (o, s) in ga.row_mut(r).iter_mut().zip(scale) {
                        *o *= s;
                    }
                }
                accumulate(grads, *input, ga);
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul_t(vb));
                accumulate(grads, *b, va.t_matmul(g));
            }
            Op::MatMulT(a, b) => {
                // out = a bᵀ: da = g b, db = gᵀ a
                let (va, vb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul(vb));
                accumulate(grads, *b, g.t_matmul(va));
            }
            Op::Relu(a) => {
                let mut ga = g.clone();
                for (o, y) in ga.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                    if *y <= 0.0 {
                        *o = 0.0;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let mut ga = g.clone();
                for (o, y) in ga.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                    *o *= y * (1.0 - y);
                }
                accumulate(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut gp = Matrix::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                    }
                    off += w;
                    accumulate(grads, p, gp);
                }
            }
            Op::Reshape(a) => {
                let (r, c) = self.value(*a).shape();
                accumulate(grads, *a, g.clone().reshaped(r, c));
            }
            Op::MeanRows(a) => {
                let (rows, cols) = self.value(*a).shape();
                let mut ga = Matrix::zeros(rows, cols);
                let n = rows as f64;
                for r in 0..rows {
                    for (o, v) in ga.row_mut(r).iter_mut().zip(g.as_slice()) {
                        *o = v / n;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::SegmentMean { input, segment, counts } => {
                let (rows, cols) = self.value(*input).shape();
                let mut ga = Matrix::zeros(rows, cols);
                for (r, &s) in segment.iter().enumerate() {
                    let n = counts[s] as f64;
                    for (o, v) in ga.row_mut(r).iter_mut().zip(g.row(s)) {
                        *o = v / n;
                    }
                }
                accumulate(grads, *input, ga);
            }
            Op::GatherRows { input, index } => {
                let (rows, cols) = self.value(*input).shape();
                let mut ga = Matrix::zeros(rows, cols);
                for (r, idx) in index.iter().enumerate() {
                    if let Some(i) = *idx {
                        for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                accumulate(grads, *input, ga);
            }
            Op::Propagate(a, op) => accumulate(grads, *a, op.apply_transpose(g)),
            Op::RowNorm(a) => {
                let va = self.value(*a);
                let mut ga = va.clone();
                for r in 0..va.rows() {
                    let norm = node.value.get(r, 0);
                    let coef = if norm > 0.0 { g.get(r, 0) / norm } else { 0.0 };
                    for o in ga.row_mut(r) {
                        *o *= coef;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                accumulate(grads, *a, Matrix::filled(r, c, g.get(0, 0)));
            }
            Op::BatchNorm { input, inv_std } => {
                let xhat = &node.value;
                let (n, cols) = xhat.shape();
                let nf = n as f64;
                let mut sum_g = vec![0.0; cols];
                let mut sum_gx = vec![0.0; cols];
                for r in 0..n {
                    for c in 0..cols {
                        sum_g[c] += g.get(r, c);
                        sum_gx[c] += g.get(r, c) * xhat.get(r, c);
                    }
                }
                let mut ga = Matrix::zeros(n, cols);
                for r in 0..n {
                    for c in 0..cols {
                        let v = inv_std[c] / nf * (nf * g.get(r, c) - sum_g[c] - xhat.get(r, c) * sum_gx[c]);
                        ga.set(r, c, v);
                    }
                }
                accumulate(grads, *input, ga);
            }
            Op::WeightedBce {
                logits,
                targets,
                weights,
            } => {
                let vl = self.value(*logits);
                let scale = g.get(0, 0) / targets.len() as f64;
                let data: Vec<f64> = vl
                    .as_slice()
                    .iter()
                    .zip(targets.iter())
                    .zip(weights.iter())
                    .map(|((&z, &y), &w)| scale * w * (sigmoid(z) - y))
                    .collect();
                accumulate(grads, *logits, Matrix::from_vec(vl.rows(), 1, data));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln σ(z) + (1-y) ln(1-σ(z))]` without forming σ(z).
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// The gradient of `v`, or `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`], but materialises zeros for disconnected nodes.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Matrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.value(v).shape();
                Matrix::zeros(r, c)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(build: impl Fn(&mut Tape, Var) -> Var, x0: Matrix) {
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let out = build(&mut tape, x);
        let s = tape.sum(out);
        let grads = tape.backward(s).unwrap();
        let analytic = grads.wrt(&tape, x);
        let h = 1e-6;
        for i in 0..x0.len() {
            let eval = |delta: f64| {
                let mut xp = x0.clone();
                xp.as_mut_slice()[i] += delta;
                let mut t = Tape::new();
                let xv = t.leaf(xp);
                let o = build(&mut t, xv);
                t.value(o).sum()
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.as_slice()[i];
            assert!(
                (a - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                "entry {i}: analytic {a} numeric {numeric}"
            );
        }
    }

    fn sample(rows: usize, cols: usize, offset: f64) -> Matrix {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|i| ((i as f64 + offset) * 1.37).sin() * 0.9 + 0.05)
                .collect(),
        )
    }

    #[test]
    fn relu_values() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::row_vector(&[-1.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y).as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn mean_rows_of_identical_rows() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[vec![1.5, -2.0], vec![1.5, -2.0], vec![1.5, -2.0]]));
        let m = t.mean_rows(x).unwrap();
        assert_eq!(t.value(m).as_slice(), &[1.5, -2.0]);
    }

    #[test]
    fn batch_norm_of_constant_batch_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::filled(4, 3, 7.25));
        let (y, stats) = t.batch_norm(x, 1e-5).unwrap();
        assert!(t.value(y).as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(stats.var, vec![0.0; 3]);
    }

    #[test]
    fn linear_gradient_is_outer_structure() {
        // loss = sum(W x): dW[i][j] = x[j] for every row i
        let mut t = Tape::new();
        let w = t.leaf(sample(3, 4, 0.0));
        let x = t.leaf(Matrix::from_vec(4, 1, vec![1.0, -2.0, 0.5, 3.0]));
        let y = t.matmul(w, x).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        let gw = g.wrt(&t, w);
        for i in 0..3 {
            assert_eq!(gw.row(i), &[1.0, -2.0, 0.5, 3.0]);
        }
    }

    #[test]
    fn disconnected_watch_gets_zero_gradient() {
        let mut t = Tape::new();
        let a = t.leaf(sample(2, 2, 0.0));
        let b = t.leaf(sample(2, 2, 1.0));
        let _unused = t.relu(b);
        let s = t.sum(a);
        let g = t.backward(s).unwrap();
        assert!(g.get(b).is_none());
        assert_eq!(g.wrt(&t, b), Matrix::zeros(2, 2));
    }

    #[test]
    fn backward_errors() {
        let t = Tape::new();
        assert!(matches!(t.backward(Var(0)), Err(NnError::NoForward)));
        let mut t = Tape::new();
        let a = t.leaf(Matrix::zeros(2, 2));
        assert!(matches!(t.backward(a), Err(NnError::NotScalar((2, 2)))));
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::zeros(2, 3));
        let b = t.leaf(Matrix::zeros(2, 4));
        let err = t.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("2x4"), "{msg}");
    }

    #[test]
    fn gradient_checks_per_op() {
        let w = sample(5, 3, 11.0);
        fd_check(
            move |t, x| {
                let wv = t.leaf(w.clone());
                t.matmul_t(x, wv).unwrap()
            },
            sample(4, 3, 0.0),
        );
        let w = sample(3, 2, 5.0);
        fd_check(
            move |t, x| {
                let wv = t.leaf(w.clone());
                t.matmul(x, wv).unwrap()
            },
            sample(4, 3, 0.0),
        );
        fd_check(|t, x| t.relu(x), sample(3, 3, 2.0));
        fd_check(|t, x| t.sigmoid(x), sample(3, 3, 2.0));
        fd_check(|t, x| t.row_norm(x), sample(3, 4, 2.0));
        fd_check(|t, x| t.mean_rows(x).unwrap(), sample(3, 4, 2.0));
        fd_check(
            |t, x| {
                let y = t.segment_mean(x, Arc::new(vec![0, 1, 0, 1, 1]), 2).unwrap();
                t.mul_const(y, Arc::new(sample(2, 2, 9.0))).unwrap()
            },
            sample(5, 2, 1.0),
        );
        fd_check(
            |t, x| {
                let y = t
                    .gather_rows(x, Arc::new(vec![Some(2), None, Some(0), Some(2)]))
                    .unwrap();
                t.mul_const(y, Arc::new(sample(4, 3, 3.0))).unwrap()
            },
            sample(3, 3, 1.0),
        );
        fd_check(
            |t, x| {
                let op = SparseOperator::from_rows(
                    3,
                    vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)], vec![(0, 0.2), (2, 0.8)]],
                );
                let y = t.propagate(x, Arc::new(op)).unwrap();
                t.mul_const(y, Arc::new(sample(3, 2, 4.0))).unwrap()
            },
            sample(3, 2, 1.0),
        );
        fd_check(
            |t, x| {
                let (y, _) = t.batch_norm(x, 1e-5).unwrap();
                t.mul_const(y, Arc::new(sample(4, 3, 8.0))).unwrap()
            },
            sample(4, 3, 1.0),
        );
        fd_check(
            |t, x| {
                let s = t.leaf(sample(1, 3, 6.0));
                let y = t.mul_cols(x, s).unwrap();
                let z = t.add_row(y, s).unwrap();
                let c = t.concat_cols(&[z, x]).unwrap();
                let r = t.reshape(c, 6, 4).unwrap();
                t.mul_const(r, Arc::new(sample(6, 4, 2.0))).unwrap()
            },
            sample(4, 3, 1.0),
        );
        fd_check(
            |t, x| {
                let y = t.affine_const(x, &[0.5, -1.0], &[2.0, 0.25]).unwrap();
                t.scale(y, -3.0)
            },
            sample(3, 2, 1.0),
        );
        fd_check(
            |t, x| {
                t.weighted_bce_with_logits(x, Arc::new(vec![1.0, 0.0, 1.0]), Arc::new(vec![0.7, 1.9, 0.7]))
                    .unwrap()
            },
            sample(3, 1, 1.0).scale(4.0),
        );
    }

    #[test]
    fn mul_cols_gradient_wrt_scale() {
        let x0 = sample(4, 3, 1.0);
        let s0 = sample(1, 3, 2.0);
        let mut t = Tape::new();
        let x = t.leaf(x0.clone());
        let s = t.leaf(s0);
        let y = t.mul_cols(x, s).unwrap();
        let total = t.sum(y);
        let g = t.backward(total).unwrap().wrt(&t, s);
        for c in 0..3 {
            let expected: f64 = (0..4).map(|r| x0.get(r, c)).sum();
            assert!((g.get(0, c) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_mean_is_row_order_invariant() {
        let rows = [vec![0.1, 1e16], vec![0.2, 1.0], vec![0.3, -1e16], vec![1e-3, 3.0]];
        let forward = |order: &[usize]| {
            let mut t = Tape::new();
            let m = Matrix::from_rows(&order.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>());
            let x = t.leaf(m);
            let y = t.segment_mean(x, Arc::new(vec![0; 4]), 1).unwrap();
            t.value(y).clone()
        };
        let base = forward(&[0, 1, 2, 3]);
        for perm in [[3, 2, 1, 0], [2, 0, 3, 1], [1, 3, 0, 2]] {
            assert_eq!(forward(&perm).as_slice(), base.as_slice());
        }
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        assert!(bce_with_logit(800.0, 1.0) < 1e-300);
        assert!(bce_with_logit(-800.0, 0.0) < 1e-300);
        assert!((bce_with_logit(800.0, 0.0) - 800.0).abs() < 1e-9);
        assert!((bce_with_logit(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
