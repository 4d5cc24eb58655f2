use std::io::{Read, Write};
use std::sync::Arc;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::loss::{class_priors, class_weights};
use super::TrainError;
use crate::evaluation::{evaluate, EvalReport};
use crate::model::{Dataset, Model};
use crate::nn::{Bound, Context, Matrix, ParamId, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    /// Graphs (or documents) per mini-batch.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation F1-macro improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm clipping threshold; off when `None`.
    pub clip_norm: Option<f64>,
    /// `(π₀, π₁)`; estimated from the training labels when `None`.
    pub class_priors: Option<[f64; 2]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            betas: [0.9, 0.999],
            eps: 1e-8,
            batch_size: 32,
            max_epochs: 20,
            patience: 5,
            seed: 0,
            clip_norm: None,
            class_priors: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.lr < 0.0 || !self.lr.is_finite() {
            return bad("lr must be finite and non-negative");
        }
        if self.betas.iter().any(|b| !(0.0..1.0).contains(b)) || self.eps <= 0.0 {
            return bad("betas must lie in [0, 1) and eps be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if self.clip_norm.is_some_and(|c| c <= 0.0) {
            return bad("clip_norm must be positive");
        }
        if let Some(p) = self.class_priors {
            if p.iter().any(|&x| x <= 0.0) || (p[0] + p[1] - 1.0).abs() > 1e-9 {
                return bad("class_priors must be positive and sum to 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1_macro: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Validation report of the selected parameters.
    pub best_report: EvalReport,
    pub priors: [f64; 2],
    pub stopped_early: bool,
}

/// Splits a shuffled order into batches; a trailing batch of one document
/// joins its predecessor so batch normalisation always sees two rows.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

fn gradient_norm(grads: &[(ParamId, Matrix)]) -> f64 {
    grads
        .iter()
        .map(|(_, g)| g.as_slice().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Trains `model` in place and leaves it at the epoch with the best
/// validation F1-macro.
pub fn train(model: &mut Model, cfg: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let priors = match cfg.class_priors {
        Some(p) => p,
        None => class_priors(train)?,
    };
    let weights = class_weights(priors);
    let mut targets = Vec::with_capacity(train.len());
    for i in 0..train.len() {
        let l = train
            .label(i)
            .ok_or_else(|| TrainError::Unlabelled(train.doc_id(i).to_string()))?;
        let c = usize::from(u8::from(l));
        if priors[c] <= 0.0 {
            return Err(TrainError::ZeroPrior { class: c });
        }
        targets.push(c);
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);
    let mut adam = Adam::new(cfg.lr, cfg.betas, cfg.eps);
    let trainable: Vec<ParamId> = model.store().trainable_ids().collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, crate::nn::ParamStore, EvalReport)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (bi, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let batch = train.batch(idx)?;
            let mut tape = Tape::new();
            let bound = Bound::bind(&mut tape, model.store());
            let mut ctx = Context::train(dropout_rng.random());
            let out = model.forward(&mut tape, &bound, &batch, &mut ctx)?;
            let y: Vec<f64> = idx.iter().map(|&i| targets[i] as f64).collect();
            let w: Vec<f64> = idx.iter().map(|&i| weights[targets[i]]).collect();
            let loss = tape.weighted_bce_with_logits(out.logits, Arc::new(y), Arc::new(w))?;
            let value = tape.value(loss).as_slice()[0];
            if !value.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    batch: bi,
                    loss: value,
                });
            }
            loss_sum += value * idx.len() as f64;
            let grads = tape.backward(loss)?;
            let mut g: Vec<(ParamId, Matrix)> = trainable
                .iter()
                .map(|&id| (id, grads.wrt(&tape, bound.var(id))))
                .collect();
            if let Some(c) = cfg.clip_norm {
                let norm = gradient_norm(&g);
                if norm > c {
                    let s = c / norm;
                    for (_, m) in &mut g {
                        *m = m.scale(s);
                    }
                }
            }
            adam.step(model.store_mut(), &g);
            ctx.apply_running_stats(model.store_mut());
        }
        let train_loss = loss_sum / train.len() as f64;
        let (report, _) = evaluate(model, val, cfg.batch_size)?;
        info!(
            "epoch {epoch}: train_loss {train_loss:.6} val_f1_macro {:.4} val_auc {}",
            report.f1_macro,
            report.auc.map_or("n/a".to_string(), |a| format!("{a:.4}"))
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_f1_macro: report.f1_macro,
            val_auc: report.auc,
        });
        if best.as_ref().is_none_or(|b| report.f1_macro > b.0) {
            best = Some((report.f1_macro, epoch, model.store().clone(), report));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                debug!("no improvement for {since_best} epochs, stopping");
                stopped_early = true;
                break;
            }
        }
    }
    let (_, best_epoch, store, best_report) = best.expect("at least one epoch ran");
    *model.store_mut() = store;
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_report,
        priors,
        stopped_early,
    })
}

/// `epoch,train_loss,val_f1_macro,val_auc`; the AUC is empty when undefined.
pub fn write_history<W: Write>(w: W, history: &[EpochRecord]) -> Result<(), TrainError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["epoch", "train_loss", "val_f1_macro", "val_auc"])?;
    for r in history {
        wtr.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_f1_macro.to_string(),
            r.val_auc.map(|a| a.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_history<R: Read>(r: R) -> Result<Vec<EpochRecord>, TrainError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, TrainError> {
            rec[i]
                .parse()
                .map_err(|_| TrainError::Config(format!("bad history value {:?}", &rec[i])))
        };
        out.push(EpochRecord {
            epoch: num(0)? as usize,
            train_loss: num(1)?,
            val_f1_macro: num(2)?,
            val_auc: if rec[3].is_empty() { None } else { Some(num(3)?) },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_joins_previous_batch() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), [4, 5]);
        assert_eq!(batches(&order[..1], 4).len(), 1);
        assert_eq!(batches(&order, 3).len(), 3);
    }

    #[test]
    fn history_round_trip() {
        let h = vec![
            EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_f1_macro: 0.25,
                val_auc: Some(0.75),
            },
            EpochRecord {
                epoch: 2,
                train_loss: 0.125,
                val_f1_macro: 0.5,
                val_auc: None,
            },
        ];
        let mut buf = Vec::new();
        write_history(&mut buf, &h).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("epoch,train_loss,val_f1_macro,val_auc\n"));
        assert_eq!(read_history(buf.as_slice()).unwrap(), h);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                class_priors: Some([0.5, 0.6]),
                ..Default::default()
            },
            TrainConfig {
                clip_norm: Some(0.0),
                ..Default::default()
            },
            TrainConfig {
                betas: [1.0, 0.9],
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
