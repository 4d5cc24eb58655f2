//! Whole-document and per-field vectors for the flat baselines.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use super::GraphError;
use crate::corpus::{DocTree, Label};
use crate::fields::{Field, N_FIELDS};
use crate::nn::Matrix;
use crate::vectorize::{field_key, FLAT_KEY};

/// Row 0 is the whole document, rows 1..=9 the canonical fields.
pub const N_CHANNELS: usize = N_FIELDS + 1;

const MAGIC: &[u8; 8] = b"HGFLAT01";

#[derive(Debug, Clone, PartialEq)]
pub struct FlatDoc {
    pub doc_id: String,
    pub channels: Matrix,
    pub label: Option<Label>,
}

impl FlatDoc {
    pub fn dim(&self) -> usize {
        self.channels.cols()
    }

    pub fn whole(&self) -> &[f64] {
        self.channels.row(0)
    }

    pub fn field(&self, f: Field) -> &[f64] {
        self.channels.row(1 + f.slot())
    }
}

/// Missing vectors (absent fields, text without known tokens) are zero.
pub fn build_flat_doc(
    tree: &DocTree,
    by_path: Option<&HashMap<String, Vec<f64>>>,
    d: usize,
) -> Result<FlatDoc, GraphError> {
    let mut channels = Matrix::zeros(N_CHANNELS, d);
    let keys = std::iter::once(FLAT_KEY.to_string()).chain(Field::ALL.into_iter().map(field_key));
    for (row, key) in keys.enumerate() {
        if let Some(v) = by_path.and_then(|m| m.get(&key)) {
            if v.len() != d {
                return Err(GraphError::WidthMismatch {
                    doc_id: tree.doc_id.clone(),
                    node: key,
                    found: v.len(),
                    expected: d,
                });
            }
            channels.row_mut(row).copy_from_slice(v);
        }
    }
    Ok(FlatDoc {
        doc_id: tree.doc_id.clone(),
        channels,
        label: tree.label,
    })
}

/// `HGFLAT01`, then per document: u32 id length, id bytes, u32 label
/// (`0xFFFFFFFF` unknown), u32 width, `10 × width` f64 values.
pub fn write_flat_docs<W: Write>(mut w: W, docs: &[FlatDoc]) -> io::Result<()> {
    w.write_all(MAGIC)?;
    for doc in docs {
        let mut buf = Vec::with_capacity(12 + doc.doc_id.len() + doc.channels.len() * 8);
        buf.extend_from_slice(&(doc.doc_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(doc.doc_id.as_bytes());
        buf.extend_from_slice(&doc.label.map_or(u32::MAX, |l| u8::from(l) as u32).to_le_bytes());
        buf.extend_from_slice(&(doc.dim() as u32).to_le_bytes());
        for v in doc.channels.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn read_flat_docs<R: Read>(mut r: R) -> Result<Vec<FlatDoc>, GraphError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let corrupt = |record: usize, message: &str| GraphError::Corrupt {
        record,
        message: message.to_string(),
    };
    if data.len() < 8 || &data[..8] != MAGIC {
        return Err(corrupt(0, "not a flat feature file"));
    }
    let mut pos = 8;
    let mut out = Vec::new();
    let take = |pos: &mut usize, n: usize, record: usize| -> Result<&[u8], GraphError> {
        if data.len() - *pos < n {
            return Err(corrupt(record, "truncated record"));
        }
        *pos += n;
        Ok(&data[*pos - n..*pos])
    };
    while pos < data.len() {
        let rec = out.len();
        let len = u32::from_le_bytes(take(&mut pos, 4, rec)?.try_into().unwrap()) as usize;
        let doc_id =
            String::from_utf8(take(&mut pos, len, rec)?.to_vec()).map_err(|_| corrupt(rec, "doc id is not UTF-8"))?;
        let label = match u32::from_le_bytes(take(&mut pos, 4, rec)?.try_into().unwrap()) {
            u32::MAX => None,
            v => Some(
                u8::try_from(v)
                    .ok()
                    .and_then(|b| Label::try_from(b).ok())
                    .ok_or_else(|| corrupt(rec, "bad label"))?,
            ),
        };
        let d = u32::from_le_bytes(take(&mut pos, 4, rec)?.try_into().unwrap()) as usize;
        let raw = take(&mut pos, N_CHANNELS * d * 8, rec)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(FlatDoc {
            doc_id,
            channels: Matrix::from_vec(N_CHANNELS, d, values),
            label,
        });
    }
    Ok(out)
}
