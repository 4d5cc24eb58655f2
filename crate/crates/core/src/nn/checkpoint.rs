//! Named-tensor checkpoint files.
//!
//! A checkpoint is a sequence of records running to end of file, all
//! integers and floats little-endian:
//!
//! ```text
//! name_len: u32 | name: [u8; name_len] | rank: u32 | dims: [u64; rank] | payload: [f64; Π dims]
//! ```

use std::io::{self, Read, Write};

use super::matrix::Matrix;
use super::params::ParamStore;
use super::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn write_tensors<W: Write>(mut w: W, tensors: &[NamedTensor]) -> io::Result<()> {
    for t in tensors {
        let name = t.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
        for &d in &t.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(false);
            }
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated tensor record"));
        }
        filled += n;
    }
    Ok(true)
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<NamedTensor>, NnError> {
    let mut out = Vec::new();
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    while read_exact_or_eof(&mut r, &mut u32buf)? {
        let name_len = u32::from_le_bytes(u32buf) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
        r.read_exact(&mut u32buf)?;
        let rank = u32::from_le_bytes(u32buf) as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            r.read_exact(&mut u64buf)?;
            dims.push(u64::from_le_bytes(u64buf) as usize);
        }
        let count: usize = dims.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut u64buf)?;
            data.push(f64::from_le_bytes(u64buf));
        }
        out.push(NamedTensor { name, dims, data });
    }
    Ok(out)
}

impl ParamStore {
    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        self.iter()
            .map(|(_, p)| NamedTensor {
                name: p.name.clone(),
                dims: if p.vector {
                    vec![p.value.cols()]
                } else {
                    vec![p.value.rows(), p.value.cols()]
                },
                data: p.value.as_slice().to_vec(),
            })
            .collect()
    }

    /// Overwrites every entry from `tensors`, which must cover exactly this store.
    pub fn load_tensors(&mut self, tensors: &[NamedTensor]) -> Result<(), NnError> {
        if tensors.len() != self.len() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                tensors.len(),
                self.len()
            )));
        }
        for t in tensors {
            let id = self
                .by_name(&t.name)
                .ok_or_else(|| NnError::Checkpoint(format!("unexpected tensor {}", t.name)))?;
            let expected = self.get(id).shape();
            let shape = match t.dims.as_slice() {
                [n] => (1, *n),
                [r, c] => (*r, *c),
                _ => {
                    return Err(NnError::Checkpoint(format!(
                        "tensor {} has unsupported rank {}",
                        t.name,
                        t.dims.len()
                    )))
                }
            };
            if shape != expected {
                return Err(NnError::Checkpoint(format!(
                    "tensor {} is {}x{}, model expects {}x{}",
                    t.name, shape.0, shape.1, expected.0, expected.1
                )));
            }
            *self.get_mut(id) = Matrix::from_vec(shape.0, shape.1, t.data.clone());
        }
        Ok(())
    }
}
