//! Binary graph records, little-endian, concatenated until end of file:
//! `n_nodes, n_edges, d, label` as u32 (label `0xFFFFFFFF` when unknown),
//! features as f64 row-major, `(child, parent)` u32 pairs, nine u32
//! selective indices ([`ABSENT`] for missing fields), then the document id
//! as a u32 length and UTF-8 bytes.

use std::io::{self, Read, Write};

use super::build::FeaturedGraph;
use super::GraphError;
use crate::corpus::Label;
use crate::fields::N_FIELDS;
use crate::nn::Matrix;

pub const ABSENT: u32 = u32::MAX;

fn u32_of(v: usize) -> io::Result<u32> {
    u32::try_from(v).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "value exceeds u32"))
}

pub fn write_graphs<W: Write>(mut w: W, graphs: &[FeaturedGraph]) -> io::Result<()> {
    let mut buf = Vec::new();
    for g in graphs {
        buf.clear();
        let label = g.label.map_or(ABSENT, |l| u8::from(l) as u32);
        for h in [u32_of(g.n_nodes())?, u32_of(g.edges.len())?, u32_of(g.dim())?, label] {
            buf.extend_from_slice(&h.to_le_bytes());
        }
        for v in g.features.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for &(c, p) in &g.edges {
            buf.extend_from_slice(&u32_of(c)?.to_le_bytes());
            buf.extend_from_slice(&u32_of(p)?.to_le_bytes());
        }
        for s in g.selective {
            let v = match s {
                Some(i) => u32_of(i)?,
                None => ABSENT,
            };
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&u32_of(g.doc_id.len())?.to_le_bytes());
        buf.extend_from_slice(g.doc_id.as_bytes());
        w.write_all(&buf)?;
    }
    w.flush()
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    record: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], GraphError> {
        if self.data.len() - self.pos < n {
            return Err(self.corrupt("truncated record"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, GraphError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn corrupt(&self, message: &str) -> GraphError {
        GraphError::Corrupt {
            record: self.record,
            message: message.to_string(),
        }
    }
}

pub fn read_graphs<R: Read>(mut r: R) -> Result<Vec<FeaturedGraph>, GraphError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut cur = Cursor {
        data: &data,
        pos: 0,
        record: 0,
    };
    let mut out = Vec::new();
    while cur.pos < data.len() {
        let n = cur.u32()? as usize;
        let n_edges = cur.u32()? as usize;
        let d = cur.u32()? as usize;
        let label = match cur.u32()? {
            ABSENT => None,
            v => Some(
                u8::try_from(v)
                    .ok()
                    .and_then(|b| Label::try_from(b).ok())
                    .ok_or_else(|| cur.corrupt("bad label"))?,
            ),
        };
        if n == 0 || n_edges + 1 != n {
            return Err(cur.corrupt("edge count must be n_nodes - 1"));
        }
        let raw = cur.take(
            n.checked_mul(d)
                .and_then(|x| x.checked_mul(8))
                .ok_or_else(|| cur.corrupt("size overflow"))?,
        )?;
        let features: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let (c, p) = (cur.u32()? as usize, cur.u32()? as usize);
            if c >= n || p >= n {
                return Err(cur.corrupt("edge endpoint out of range"));
            }
            edges.push((c, p));
        }
        let mut selective = [None; N_FIELDS];
        for s in &mut selective {
            *s = match cur.u32()? {
                ABSENT => None,
                v if (v as usize) < n => Some(v as usize),
                _ => return Err(cur.corrupt("selective index out of range")),
            };
        }
        let len = cur.u32()? as usize;
        let doc_id = String::from_utf8(cur.take(len)?.to_vec()).map_err(|_| cur.corrupt("doc id is not UTF-8"))?;
        out.push(FeaturedGraph {
            doc_id,
            features: Matrix::from_vec(n, d, features),
            edges,
            selective,
            label,
        });
        cur.record += 1;
    }
    Ok(out)
}
