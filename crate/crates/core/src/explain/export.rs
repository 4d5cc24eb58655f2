use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::corpus::Label;
use crate::fields::{Field, N_FIELDS};
use crate::graph::{batch_graphs, FeaturedGraph};
use crate::model::{Batch, Model};
use crate::nn::{Bound, Context, Tape};

pub const GLOBAL_COMPONENT: &str = "global";
/// Activations of the last hidden block of the classifier.
pub const HIDDEN_COMPONENT: &str = "hidden";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub doc_id: String,
    pub label: Option<Label>,
    /// A field name, [`GLOBAL_COMPONENT`] or [`HIDDEN_COMPONENT`].
    pub component: String,
    pub values: Vec<f64>,
}

/// Evaluation-mode pooled representations: per document the nine field
/// vectors (selective models), the global mean (when pooled) and the last
/// hidden layer, in that order.
pub fn export_embeddings(
    model: &Model,
    graphs: &[FeaturedGraph],
    batch_size: usize,
) -> Result<Vec<EmbeddingRow>, ExplainError> {
    let variant = model.config().variant;
    if !variant.is_graph() {
        return Err(ExplainError::NotGraph(variant));
    }
    let per_chunk: Vec<Vec<EmbeddingRow>> = graphs
        .par_chunks(batch_size.max(1))
        .map(|chunk| chunk_rows(model, chunk))
        .collect::<Result<_, _>>()?;
    Ok(per_chunk.into_iter().flatten().collect())
}

fn chunk_rows(model: &Model, graphs: &[FeaturedGraph]) -> Result<Vec<EmbeddingRow>, ExplainError> {
    let batch = Batch::Graphs(batch_graphs(graphs)?);
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, model.store());
    let out = model.forward(&mut tape, &bound, &batch, &mut Context::eval())?;
    let fields = out.selective_rows.map(|v| tape.value(v));
    let global = out.global.map(|v| tape.value(v));
    let hidden = out.hidden.last().map(|&v| tape.value(v));
    let mut rows = Vec::new();
    for (i, g) in graphs.iter().enumerate() {
        let mut push = |component: &str, values: &[f64]| {
            rows.push(EmbeddingRow {
                doc_id: g.doc_id.clone(),
                label: g.label,
                component: component.to_string(),
                values: values.to_vec(),
            })
        };
        if let Some(f) = fields {
            for (slot, field) in Field::ALL.into_iter().enumerate() {
                push(field.name(), f.row(i * N_FIELDS + slot));
            }
        }
        if let Some(m) = global {
            push(GLOBAL_COMPONENT, m.row(i));
        }
        if let Some(m) = hidden {
            push(HIDDEN_COMPONENT, m.row(i));
        }
    }
    Ok(rows)
}

/// `doc_id,label,component,values` with space-separated values; the label
/// is empty when unknown.
pub fn write_embeddings<W: Write>(w: W, rows: &[EmbeddingRow]) -> Result<(), ExplainError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["doc_id", "label", "component", "values"])?;
    for r in rows {
        let label = r.label.map(|l| u8::from(l).to_string()).unwrap_or_default();
        let values: Vec<String> = r.values.iter().map(f64::to_string).collect();
        wtr.write_record([
            r.doc_id.as_str(),
            label.as_str(),
            r.component.as_str(),
            values.join(" ").as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
