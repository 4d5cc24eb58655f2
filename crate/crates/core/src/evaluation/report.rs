use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{confusion, roc_auc, ClassMetrics, Confusion, Metrics};
use super::EvalError;
use crate::model::{Dataset, Model};
use crate::nn::sigmoid;

/// Documents with `sigmoid(logit) > THRESHOLD` are predicted class 1.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub doc_id: String,
    pub label: Option<u8>,
    pub logit: f64,
    /// `sigmoid(logit)`, the probability of class 1.
    pub score: f64,
}

impl Score {
    pub fn predicted_positive(&self) -> bool {
        self.score > THRESHOLD
    }
}

/// Headline precision and recall are macro averages; micro and
/// positive-class values are reported alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_scored: usize,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1_macro: f64,
    pub f1_micro: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub precision_micro: f64,
    pub recall_micro: f64,
    pub precision_positive: f64,
    pub recall_positive: f64,
    pub per_class: [ClassMetrics; 2],
    pub confusion: Confusion,
}

impl EvalReport {
    pub fn from_scores(scores: &[Score]) -> Result<Self, EvalError> {
        let labels: Vec<bool> = scores
            .iter()
            .map(|s| {
                s.label
                    .map(|l| l == 1)
                    .ok_or_else(|| EvalError::Unlabelled(s.doc_id.clone()))
            })
            .collect::<Result<_, _>>()?;
        let preds: Vec<bool> = scores.iter().map(Score::predicted_positive).collect();
        let c = confusion(&labels, &preds)?;
        let m = Metrics::from_confusion(&c);
        let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
        let auc = match roc_auc(&labels, &values) {
            Ok(a) => Some(a),
            Err(EvalError::SingleClass) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            n_scored: scores.len(),
            threshold: THRESHOLD,
            precision: m.precision_macro,
            recall: m.recall_macro,
            f1_macro: m.f1_macro,
            f1_micro: m.f1_micro,
            auc,
            accuracy: m.accuracy,
            precision_micro: m.precision_micro,
            recall_micro: m.recall_micro,
            precision_positive: m.per_class[1].precision,
            recall_positive: m.per_class[1].recall,
            per_class: m.per_class,
            confusion: c,
        })
    }
}

/// Evaluation-mode scores in dataset order. Batches are scored in parallel.
pub fn score(model: &Model, data: &Dataset, batch_size: usize) -> Result<Vec<Score>, EvalError> {
    if data.is_empty() {
        return Err(EvalError::Empty);
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let chunks: Vec<&[usize]> = idx.chunks(batch_size.max(1)).collect();
    let logits: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|c| {
            let batch = data.batch(c)?;
            model.logits(&batch)
        })
        .collect::<Result<_, _>>()?;
    Ok(logits
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, z)| Score {
            doc_id: data.doc_id(i).to_string(),
            label: data.label(i).map(u8::from),
            logit: z,
            score: sigmoid(z),
        })
        .collect())
}

pub fn evaluate(model: &Model, data: &Dataset, batch_size: usize) -> Result<(EvalReport, Vec<Score>), EvalError> {
    let scores = score(model, data, batch_size)?;
    Ok((EvalReport::from_scores(&scores)?, scores))
}

/// `doc_id,label,score` rows.
pub fn write_scores<W: Write>(w: W, scores: &[Score]) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["doc_id", "label", "score"])?;
    for s in scores {
        let label = s.label.map(|l| l.to_string()).unwrap_or_default();
        wtr.write_record([s.doc_id.as_str(), label.as_str(), s.score.to_string().as_str()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(label: u8, score: f64) -> Score {
        Score {
            doc_id: format!("d{label}{score}"),
            label: Some(label),
            logit: 0.0,
            score,
        }
    }

    #[test]
    fn report_matches_macro_arithmetic() {
        let scores = [s(1, 0.9), s(0, 0.8), s(1, 0.3), s(0, 0.1), s(0, 0.2)];
        let r = EvalReport::from_scores(&scores).unwrap();
        assert_eq!(
            r.confusion,
            Confusion {
                tp: 1,
                fp: 1,
                tn: 2,
                fn_: 1
            }
        );
        let p = (2.0 / 3.0 + 0.5) / 2.0;
        let rc = (2.0 / 3.0 + 0.5) / 2.0;
        assert!((r.precision - p).abs() < 1e-15);
        assert!((r.recall - rc).abs() < 1e-15);
        assert_eq!(r.precision_positive, 0.5);
        assert!((r.auc.unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.n_scored, 5);
    }

    #[test]
    fn single_class_has_no_auc_and_missing_labels_fail() {
        let r = EvalReport::from_scores(&[s(0, 0.2), s(0, 0.7)]).unwrap();
        assert_eq!(r.auc, None);
        let mut bad = s(0, 0.2);
        bad.label = None;
        assert!(matches!(EvalReport::from_scores(&[bad]), Err(EvalError::Unlabelled(_))));
    }

    #[test]
    fn threshold_is_strict() {
        assert!(!s(0, 0.5).predicted_positive());
        assert!(s(0, 0.5000001).predicted_positive());
    }

    #[test]
    fn scores_csv() {
        let mut buf = Vec::new();
        write_scores(&mut buf, &[s(1, 0.25)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "doc_id,label,score\nd10.25,1,0.25\n");
    }
}
