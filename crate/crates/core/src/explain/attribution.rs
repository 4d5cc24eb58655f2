use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::corpus::Label;
use crate::evaluation::THRESHOLD;
use crate::fields::{Field, N_FIELDS};
use crate::graph::{batch_graphs, FeaturedGraph};
use crate::model::{Batch, Model, Variant};
use crate::nn::{sigmoid, Bound, Context, Matrix, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub doc_id: String,
    pub label: Option<Label>,
    pub logit: f64,
    /// Class whose output was differentiated.
    pub predicted: Label,
    /// One value per field in canonical order; zero for absent fields.
    pub alpha: [f64; N_FIELDS],
}

/// Which documents enter an aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributionFilter {
    /// Documents the model scores above the decision threshold.
    #[default]
    Predicted,
    /// Documents whose ground-truth label is class 1.
    Truth,
}

impl AttributionFilter {
    fn accepts(self, a: &Attribution) -> bool {
        match self {
            AttributionFilter::Predicted => a.predicted == Label::Terminated,
            AttributionFilter::Truth => a.label == Some(Label::Terminated),
        }
    }
}

impl fmt::Display for AttributionFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttributionFilter::Predicted => "predicted",
            AttributionFilter::Truth => "truth",
        })
    }
}

impl FromStr for AttributionFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "predicted" => Ok(AttributionFilter::Predicted),
            "truth" => Ok(AttributionFilter::Truth),
            other => Err(format!("unknown filter {other:?} (expected predicted or truth)")),
        }
    }
}

/// Attributions for every graph, computed `batch_size` graphs at a time.
///
/// Evaluation mode makes each logit depend on its own graph only, so one
/// backward pass per batch gives every document's gradient.
pub fn field_gradients(
    model: &Model,
    graphs: &[FeaturedGraph],
    batch_size: usize,
) -> Result<Vec<Attribution>, ExplainError> {
    let variant = model.config().variant;
    if variant != Variant::GcnSelective9 {
        return Err(ExplainError::NotSelective(variant));
    }
    let per_chunk: Vec<Vec<Attribution>> = graphs
        .par_chunks(batch_size.max(1))
        .map(|chunk| chunk_gradients(model, chunk))
        .collect::<Result<_, _>>()?;
    Ok(per_chunk.into_iter().flatten().collect())
}

fn chunk_gradients(model: &Model, graphs: &[FeaturedGraph]) -> Result<Vec<Attribution>, ExplainError> {
    let batch = Batch::Graphs(batch_graphs(graphs)?);
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, model.store());
    let out = model.forward(&mut tape, &bound, &batch, &mut Context::eval())?;
    let logits = tape.value(out.logits).as_slice().to_vec();
    let predicted: Vec<Label> = logits
        .iter()
        .map(|&z| Label::from_bool(sigmoid(z) > THRESHOLD))
        .collect();
    let seed: Vec<f64> = predicted
        .iter()
        .map(|&c| if c == Label::Terminated { 1.0 } else { -1.0 })
        .collect();
    let grads = tape.backward_seeded(out.logits, Matrix::from_vec(graphs.len(), 1, seed))?;
    let rows = out.selective_rows.expect("selective model exposes field rows");
    let g = grads.wrt(&tape, rows);
    Ok(graphs
        .iter()
        .enumerate()
        .map(|(i, graph)| {
            let mut alpha = [0.0; N_FIELDS];
            for (slot, a) in alpha.iter_mut().enumerate() {
                if graph.selective[slot].is_some() {
                    *a = g.row(i * N_FIELDS + slot).iter().map(|v| v * v).sum::<f64>().sqrt();
                }
            }
            Attribution {
                doc_id: graph.doc_id.clone(),
                label: graph.label,
                logit: logits[i],
                predicted: predicted[i],
                alpha,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRank {
    pub field: Field,
    pub mean_alpha: f64,
    /// 1 for the largest mean.
    pub rank: usize,
}

/// Per-field mean over the first `limit` attributions accepted by `filter`,
/// ordered by rank. Ties keep the canonical field order.
pub fn aggregate_attributions(
    attributions: &[Attribution],
    filter: AttributionFilter,
    limit: usize,
) -> Result<(Vec<FieldRank>, usize), ExplainError> {
    if limit == 0 {
        return Err(ExplainError::ZeroLimit);
    }
    let chosen: Vec<&Attribution> = attributions.iter().filter(|a| filter.accepts(a)).take(limit).collect();
    if chosen.is_empty() {
        return Err(ExplainError::NoQualifying(format!(
            "filter {filter}, {} documents scanned",
            attributions.len()
        )));
    }
    let n = chosen.len() as f64;
    let mut means: Vec<(Field, f64)> = Field::ALL
        .into_iter()
        .enumerate()
        .map(|(slot, f)| (f, chosen.iter().map(|a| a.alpha[slot]).sum::<f64>() / n))
        .collect();
    means.sort_by(|a, b| b.1.total_cmp(&a.1));
    let ranking = means
        .into_iter()
        .enumerate()
        .map(|(i, (field, mean_alpha))| FieldRank {
            field,
            mean_alpha,
            rank: i + 1,
        })
        .collect();
    Ok((ranking, chosen.len()))
}

/// `doc_id,field,alpha`, nine rows per document.
pub fn write_attributions<W: Write>(w: W, attributions: &[Attribution]) -> Result<(), ExplainError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["doc_id", "field", "alpha"])?;
    for a in attributions {
        for (f, alpha) in Field::ALL.into_iter().zip(a.alpha) {
            wtr.write_record([a.doc_id.as_str(), f.name(), alpha.to_string().as_str()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `field,mean_alpha,rank`.
pub fn write_ranking<W: Write>(w: W, ranking: &[FieldRank]) -> Result<(), ExplainError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["field", "mean_alpha", "rank"])?;
    for r in ranking {
        wtr.write_record([
            r.field.name(),
            r.mean_alpha.to_string().as_str(),
            r.rank.to_string().as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
