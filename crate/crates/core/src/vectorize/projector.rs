use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::sparse::SparseVector;
use super::VectorizeError;

/// Row-sparse `d × cols` projection matrix with exactly `k` unit-norm
/// nonzeros per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowMatrix {
    cols: usize,
    k: usize,
    seed: u64,
    rows: Vec<Vec<(u32, f64)>>,
}

impl SparseRowMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, r: usize) -> &[(u32, f64)] {
        &self.rows[r]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut out = vec![0.0; self.cols];
                for &(i, v) in row {
                    out[i as usize] = v;
                }
                out
            })
            .collect()
    }
}

fn projector_row(r: usize, cols: usize, k: usize, seed: u64) -> Vec<(u32, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let values: Vec<f64> = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
    let mut idx: Vec<u32> = (0..cols as u32).collect();
    if k < cols {
        idx.select_nth_unstable_by(k - 1, |&a, &b| {
            values[b as usize]
                .abs()
                .total_cmp(&values[a as usize].abs())
                .then(a.cmp(&b))
        });
        idx.truncate(k);
    }
    idx.sort_unstable();
    let norm = idx.iter().map(|&i| values[i as usize].powi(2)).sum::<f64>().sqrt();
    idx.into_iter().map(|i| (i, values[i as usize] / norm)).collect()
}

/// Default row sparsity: one percent of the vocabulary at width 768, scaled
/// with `768 / d` so each token keeps about the same number of nonzero rows
/// at any width. Clamped to `1..=vocab_size`.
pub fn default_nonzeros(vocab_size: usize, d: usize) -> usize {
    let k = (0.01 * vocab_size as f64 * 768.0 / d.max(1) as f64).round() as usize;
    k.clamp(1, vocab_size.max(1))
}

/// Each row draws `vocab_size` standard normals from a stream keyed by
/// `(seed, row)`, keeps the `k` largest in magnitude and is scaled to unit
/// norm.
pub fn make_projector(d: usize, vocab_size: usize, k: usize, seed: u64) -> Result<SparseRowMatrix, VectorizeError> {
    if d == 0 {
        return Err(VectorizeError::Projector("d must be at least 1".into()));
    }
    if k == 0 || k > vocab_size {
        return Err(VectorizeError::Projector(format!(
            "k = {k} must lie in 1..={vocab_size}"
        )));
    }
    if vocab_size > u32::MAX as usize {
        return Err(VectorizeError::Projector("vocabulary too large".into()));
    }
    let rows = (0..d)
        .into_par_iter()
        .map(|r| projector_row(r, vocab_size, k, seed))
        .collect();
    Ok(SparseRowMatrix {
        cols: vocab_size,
        k,
        seed,
        rows,
    })
}

fn sparse_dot(x: &[(usize, f64)], row: &[(u32, f64)]) -> f64 {
    let mut acc = 0.0;
    if x.len() * 8 < row.len() {
        for &(i, v) in x {
            if let Ok(p) = row.binary_search_by_key(&(i as u32), |e| e.0) {
                acc += v * row[p].1;
            }
        }
    } else {
        let (mut a, mut b) = (0, 0);
        while a < x.len() && b < row.len() {
            let (ia, ib) = (x[a].0, row[b].0 as usize);
            if ia == ib {
                acc += x[a].1 * row[b].1;
                a += 1;
                b += 1;
            } else if ia < ib {
                a += 1;
            } else {
                b += 1;
            }
        }
    }
    acc
}

/// `A x` as a dense vector.
pub fn project(x: &SparseVector, a: &SparseRowMatrix) -> Result<Vec<f64>, VectorizeError> {
    if x.dim() != a.cols {
        return Err(VectorizeError::Dimension {
            vector: x.dim(),
            expected: a.cols,
        });
    }
    Ok(a.rows.iter().map(|row| sparse_dot(x.entries(), row)).collect())
}

/// Little-endian: header `d, cols, k, seed` as u64, then per row `k`
/// records of `(u32 index, f64 value)`.
pub fn write_projector<W: Write>(mut w: W, a: &SparseRowMatrix) -> io::Result<()> {
    for h in [a.rows.len() as u64, a.cols as u64, a.k as u64, a.seed] {
        w.write_all(&h.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(a.k * 12);
    for row in &a.rows {
        buf.clear();
        for &(i, v) in row {
            buf.extend_from_slice(&i.to_le_bytes());
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn read_projector<R: Read>(mut r: R) -> Result<SparseRowMatrix, VectorizeError> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    let h = |i: usize| u64::from_le_bytes(header[i * 8..i * 8 + 8].try_into().unwrap());
    let (d, cols, k, seed) = (h(0) as usize, h(1) as usize, h(2) as usize, h(3));
    if k == 0 || k > cols || d == 0 {
        return Err(VectorizeError::Projector(format!(
            "corrupt header d={d} cols={cols} k={k}"
        )));
    }
    let mut rows = Vec::with_capacity(d);
    let mut buf = vec![0u8; k * 12];
    for _ in 0..d {
        r.read_exact(&mut buf)?;
        let mut row = Vec::with_capacity(k);
        for rec in buf.chunks_exact(12) {
            let i = u32::from_le_bytes(rec[..4].try_into().unwrap());
            let v = f64::from_le_bytes(rec[4..].try_into().unwrap());
            if i as usize >= cols || row.last().is_some_and(|&(p, _)| p >= i) {
                return Err(VectorizeError::Projector("corrupt row entries".into()));
            }
            row.push((i, v));
        }
        rows.push(row);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(VectorizeError::Projector("trailing bytes after last row".into()));
    }
    Ok(SparseRowMatrix { cols, k, seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_nonzeros_keeps_coverage() {
        assert_eq!(default_nonzeros(5000, 768), 50);
        assert_eq!(default_nonzeros(5000, 64), 600);
        assert_eq!(default_nonzeros(40, 16), 19);
        assert_eq!(default_nonzeros(3, 4096), 1);
        assert_eq!(default_nonzeros(100, 1), 100);
        assert_eq!(default_nonzeros(0, 8), 1);
    }

    #[test]
    fn rows_have_k_unit_norm_entries() {
        let a = make_projector(16, 300, 7, 1).unwrap();
        for r in 0..a.n_rows() {
            assert_eq!(a.row(r).len(), 7);
            let n: f64 = a.row(r).iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
        assert_eq!(a.nnz(), 16 * 7);
    }

    #[test]
    fn kept_entries_are_the_largest() {
        let (cols, k, seed) = (50, 5, 9);
        let a = make_projector(3, cols, k, seed).unwrap();
        for r in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let raw: Vec<f64> = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
            let mut order: Vec<usize> = (0..cols).collect();
            order.sort_by(|&x, &y| raw[y].abs().total_cmp(&raw[x].abs()));
            let mut top: Vec<u32> = order[..k].iter().map(|&i| i as u32).collect();
            top.sort();
            assert_eq!(a.row(r).iter().map(|e| e.0).collect::<Vec<_>>(), top);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        assert_eq!(
            make_projector(8, 100, 10, 3).unwrap(),
            make_projector(8, 100, 10, 3).unwrap()
        );
        assert_ne!(
            make_projector(8, 100, 10, 3).unwrap(),
            make_projector(8, 100, 10, 4).unwrap()
        );
    }

    #[test]
    fn argument_errors() {
        assert!(make_projector(4, 10, 11, 0).is_err());
        assert!(make_projector(4, 10, 0, 0).is_err());
        assert!(make_projector(0, 10, 2, 0).is_err());
        assert!(make_projector(4, 10, 10, 0).is_ok());
    }

    #[test]
    fn basis_vector_selects_a_column() {
        let a = make_projector(12, 40, 20, 5).unwrap();
        let dense = a.to_dense();
        for i in [0, 17, 39] {
            let e = SparseVector::new(40, vec![(i, 1.0)]).unwrap();
            let y = project(&e, &a).unwrap();
            for r in 0..12 {
                assert_eq!(y[r], dense[r][i]);
            }
        }
        assert!(project(&SparseVector::zeros(40), &a).unwrap().iter().all(|&v| v == 0.0));
        assert!(project(&SparseVector::zeros(41), &a).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let a = make_projector(5, 60, 6, 77).unwrap();
        let mut buf = Vec::new();
        write_projector(&mut buf, &a).unwrap();
        assert_eq!(buf.len(), 32 + 5 * 6 * 12);
        assert_eq!(read_projector(buf.as_slice()).unwrap(), a);
        buf.push(0);
        assert!(read_projector(buf.as_slice()).is_err());
    }
}
