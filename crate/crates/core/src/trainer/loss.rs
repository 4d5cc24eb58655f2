use super::TrainError;
use crate::model::Dataset;
use crate::nn::bce_with_logit;

/// `(π₀, π₁)` from the labels of a dataset.
pub fn class_priors(data: &Dataset) -> Result<[f64; 2], TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    let mut pos = 0usize;
    for i in 0..data.len() {
        match data.label(i) {
            Some(l) => pos += usize::from(u8::from(l)),
            None => return Err(TrainError::Unlabelled(data.doc_id(i).to_string())),
        }
    }
    let p1 = pos as f64 / data.len() as f64;
    Ok([1.0 - p1, p1])
}

/// `w_c = 1 / (2 π_c)`: each class carries the same expected weight mass.
pub fn class_weights(priors: [f64; 2]) -> [f64; 2] {
    priors.map(|p| 1.0 / (2.0 * p))
}

/// `(1/B) Σ_j w_{y_j} · BCE(sigmoid(z_j), y_j)` with labels in {0, 1}.
pub fn weighted_bce(logits: &[f64], labels: &[u8], priors: [f64; 2]) -> Result<f64, TrainError> {
    if logits.len() != labels.len() {
        return Err(TrainError::Length(logits.len(), labels.len()));
    }
    if logits.is_empty() {
        return Err(TrainError::EmptySplit("loss"));
    }
    let w = class_weights(priors);
    let mut total = 0.0;
    for (&z, &y) in logits.iter().zip(labels) {
        let c = usize::from(y);
        if priors[c] <= 0.0 {
            return Err(TrainError::ZeroPrior { class: c });
        }
        total += w[c] * bce_with_logit(z, y as f64);
    }
    Ok(total / logits.len() as f64)
}
