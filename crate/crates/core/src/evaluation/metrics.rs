use serde::{Deserialize, Serialize};

use super::EvalError;

/// Binary confusion counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

pub fn confusion(labels: &[bool], predictions: &[bool]) -> Result<Confusion, EvalError> {
    if labels.len() != predictions.len() {
        return Err(EvalError::Length(labels.len(), predictions.len()));
    }
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut c = Confusion::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y, p) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl ClassMetrics {
    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
            support: tp + fn_,
        }
    }
}

/// Per-class, macro- and micro-averaged scores. Undefined ratios count as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Index 0 is class 0 (completed), index 1 class 1.
    pub per_class: [ClassMetrics; 2],
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub precision_micro: f64,
    pub recall_micro: f64,
    pub f1_micro: f64,
    pub accuracy: f64,
}

impl Metrics {
    pub fn from_confusion(c: &Confusion) -> Self {
        let positive = ClassMetrics::from_counts(c.tp, c.fp, c.fn_);
        let negative = ClassMetrics::from_counts(c.tn, c.fn_, c.fp);
        let per_class = [negative, positive];
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / 2.0;
        // Pooled over both classes: every error is one false positive for
        // one class and one false negative for the other.
        let tp = c.tp + c.tn;
        let fp = c.fp + c.fn_;
        let fn_ = c.fn_ + c.fp;
        let precision_micro = ratio(tp, tp + fp);
        let recall_micro = ratio(tp, tp + fn_);
        Self {
            per_class,
            precision_macro: mean(|m| m.precision),
            recall_macro: mean(|m| m.recall),
            f1_macro: mean(|m| m.f1),
            precision_micro,
            recall_micro,
            f1_micro: f1(precision_micro, recall_micro),
            accuracy: ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn_),
        }
    }
}

/// Rank-based (Mann–Whitney) AUC; tied scores share their average rank.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<f64, EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::Length(labels.len(), scores.len()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}
