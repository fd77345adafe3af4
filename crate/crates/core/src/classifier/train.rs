//! k-fold training with early stopping and best-fold selection.

use alloc::string::String;
use alloc::vec::Vec;

use super::{adamw_step, compute_pos_weight, mean_loss, AdamWConfig, ClassifierError, Example, Mlp, OptimizerState};
use crate::dataset::Label;
use crate::deduction::Encoding;
use crate::rng::{stream, SeededRng};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Decoupled (AdamW) weight decay coefficient.
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a strictly lower validation loss.
    pub patience: usize,
    pub folds: usize,
    pub batch_size: usize,
    /// Positive-class loss weight; computed from the training labels when unset.
    pub pos_weight: Option<f64>,
    pub hidden: [usize; 2],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            max_epochs: 20,
            patience: 3,
            folds: 5,
            batch_size: 200,
            pos_weight: None,
            hidden: [64, 32],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |msg: &str| Err(ClassifierError::InvalidConfig(String::from(msg)));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.patience == 0 || self.patience >= self.max_epochs {
            return bad("patience must be in 1..max_epochs");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if let Some(w) = self.pos_weight {
            if !(w > 0.0 && w.is_finite()) {
                return bad("pos_weight must be positive");
            }
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub validation_size: usize,
    /// Per epoch: mean loss over the epoch's mini-batches, each measured
    /// before its update.
    pub train_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainedModel {
    pub params: Mlp,
    pub fold_metrics: Vec<FoldReport>,
    pub chosen_fold: usize,
    pub keyword_model_hash: u64,
    pub pos_weight: f64,
    pub config: TrainConfig,
}

fn fold_bounds(n: usize, folds: usize) -> Vec<(usize, usize)> {
    let base = n / folds;
    let extra = n % folds;
    let mut start = 0;
    (0..folds)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let bounds = (start, start + len);
            start += len;
            bounds
        })
        .collect()
}

/// Trains one network per fold and keeps the one with the lowest best-epoch
/// validation loss.
///
/// Samples are shuffled once with the seed and cut into contiguous folds.
/// Each fold trains on the others in mini-batches (reshuffled every epoch)
/// and keeps the parameters of its best validation epoch.
pub fn train(samples: &[(Encoding, Label)], config: &TrainConfig) -> Result<TrainedModel, ClassifierError> {
    config.validate()?;
    let Some((first, _)) = samples.first() else {
        return Err(ClassifierError::InsufficientSamples {
            label: Label::Normal,
            have: 0,
            need: config.folds,
        });
    };
    let k = first.len();
    let hash = first.keyword_model_hash;
    for (e, _) in samples {
        if e.keyword_model_hash != hash {
            return Err(ClassifierError::ModelEncodingMismatch {
                expected: hash,
                got: e.keyword_model_hash,
            });
        }
        if e.len() != k {
            return Err(ClassifierError::DimensionMismatch {
                expected: k,
                got: e.len(),
            });
        }
    }
    if k == 0 {
        return Err(ClassifierError::DimensionMismatch { expected: 1, got: 0 });
    }

    let labels: Vec<Label> = samples.iter().map(|(_, l)| *l).collect();
    let positives = labels.iter().filter(|l| **l == Label::Anomalous).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ClassifierError::DegenerateLabels);
    }
    for (label, have) in [(Label::Normal, negatives), (Label::Anomalous, positives)] {
        if have < config.folds {
            return Err(ClassifierError::InsufficientSamples {
                label,
                have,
                need: config.folds,
            });
        }
    }
    let pos_weight = match config.pos_weight {
        Some(w) => w,
        None => compute_pos_weight(&labels)?,
    };

    let examples: Vec<Example<'_>> = samples.iter().map(|(e, l)| (e.values.as_slice(), *l)).collect();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    SeededRng::new(config.seed, stream::TRAIN_SHUFFLE).shuffle(&mut order);

    let dims = [k, config.hidden[0], config.hidden[1], 1];
    let optimizer = config.optimizer();
    let mut best: Option<(f64, Mlp)> = None;
    let mut chosen_fold = 0;
    let mut fold_metrics = Vec::with_capacity(config.folds);

    for (fold, (start, end)) in fold_bounds(order.len(), config.folds).into_iter().enumerate() {
        let validation: Vec<Example<'_>> = order[start..end].iter().map(|&i| examples[i]).collect();
        let mut train_idx: Vec<usize> = order[..start].iter().chain(&order[end..]).copied().collect();

        let mut params = Mlp::init(
            &dims,
            &mut SeededRng::new(config.seed, stream::FOLD_INIT_BASE + fold as u64),
        );
        let mut state = OptimizerState::new(&params);
        let mut batch_rng = SeededRng::new(config.seed, stream::FOLD_BATCHES_BASE + fold as u64);

        let mut report = FoldReport {
            fold,
            train_size: train_idx.len(),
            validation_size: validation.len(),
            train_losses: Vec::new(),
            validation_losses: Vec::new(),
            best_epoch: 0,
            best_validation_loss: f64::INFINITY,
            stopped_early: false,
        };
        let mut fold_best = params.clone();
        let mut stale = 0;
        let mut batch: Vec<Example<'_>> = Vec::with_capacity(config.batch_size);

        for epoch in 0..config.max_epochs {
            batch_rng.shuffle(&mut train_idx);
            let mut epoch_loss = 0.0;
            for chunk in train_idx.chunks(config.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| examples[i]));
                let (loss, grads) = params.loss_and_gradients(&batch, pos_weight)?;
                epoch_loss += loss * chunk.len() as f64;
                adamw_step(&mut params, &grads, &mut state, &optimizer)?;
            }
            report.train_losses.push(epoch_loss / train_idx.len() as f64);

            let val_loss = mean_loss(&params, &validation, pos_weight)?;
            report.validation_losses.push(val_loss);
            if val_loss < report.best_validation_loss {
                report.best_validation_loss = val_loss;
                report.best_epoch = epoch;
                fold_best = params.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    report.stopped_early = epoch + 1 < config.max_epochs;
                    break;
                }
            }
        }

        if best
            .as_ref()
            .is_none_or(|(loss, _)| report.best_validation_loss < *loss)
        {
            best = Some((report.best_validation_loss, fold_best));
            chosen_fold = fold;
        }
        fold_metrics.push(report);
    }

    let (_, params) = best.expect("at least two folds were trained");
    if !params.is_finite() {
        return Err(ClassifierError::InvalidParams("training diverged".into()));
    }
    Ok(TrainedModel {
        params,
        fold_metrics,
        chosen_fold,
        keyword_model_hash: hash,
        pos_weight,
        config: config.clone(),
    })
}

/// Anomaly probability for one encoding.
pub fn predict(model: &TrainedModel, encoding: &Encoding) -> Result<f64, ClassifierError> {
    if encoding.keyword_model_hash != model.keyword_model_hash {
        return Err(ClassifierError::ModelEncodingMismatch {
            expected: model.keyword_model_hash,
            got: encoding.keyword_model_hash,
        });
    }
    model.params.forward(&encoding.values)
}
