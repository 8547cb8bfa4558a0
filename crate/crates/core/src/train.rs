//! Mini-batch training loop with early stopping, plateau learning-rate
//! reduction and per-epoch checkpoint hooks.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::optim::{adam_step, clip_global_norm, AdamState};
use crate::params::Parameters;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub initial_lr: f64,
    pub min_lr: f64,
    /// Multiplier applied to the learning rate after every epoch whose
    /// validation loss does not improve on the best so far.
    pub plateau_factor: f64,
    /// Consecutive non-improving epochs that end training.
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Global-norm gradient clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub rng_seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            initial_lr: 0.001,
            min_lr: 1e-5,
            plateau_factor: 0.1,
            early_stop_patience: 3,
            max_epochs: 20,
            batch_size: 32,
            clip_norm: Some(5.0),
            rng_seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_lr > 0.0 && self.min_lr <= self.initial_lr) {
            return Err(Error::config("schedule needs 0 < min_lr <= initial_lr"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::config("plateau_factor must lie in (0, 1)"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::config("early_stop_patience must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if let Some(c) = self.clip_norm {
            if c <= 0.0 {
                return Err(Error::config("clip_norm must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Learning rate in effect once this epoch's plateau rule has run, i.e.
    /// the rate the next epoch trains with.
    pub lr: f64,
    pub checkpoint_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were returned (1-based).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// A differentiable training objective over a parameter set.
pub trait Objective {
    type Params: Parameters + Clone;
    type Example;

    /// Mean loss over `batch`.
    fn loss(&self, params: &Self::Params, batch: &[&Self::Example]) -> Result<f64>;

    /// Mean loss over `batch` and its gradient with respect to every
    /// trainable tensor of `params`.
    fn loss_and_grad(&self, params: &Self::Params, batch: &[&Self::Example]) -> Result<(f64, Self::Params)>;
}

/// Gradient of the mean batch loss, rejecting non-finite results with the
/// name of the offending tensor.
pub fn compute_gradients<O: Objective>(
    obj: &O,
    params: &O::Params,
    batch: &[&O::Example],
) -> Result<(f64, O::Params)> {
    params.ensure_finite()?;
    let (loss, grad) = obj.loss_and_grad(params, batch)?;
    if !loss.is_finite() {
        return Err(Error::NumericOverflow {
            tensor: String::from("loss"),
        });
    }
    grad.ensure_finite()?;
    Ok((loss, grad))
}

/// Mean loss of `params` over a whole dataset, evaluated in batches.
pub fn dataset_loss<O: Objective>(obj: &O, params: &O::Params, data: &[O::Example], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in data.chunks(batch_size.max(1)) {
        let refs: Vec<&O::Example> = chunk.iter().collect();
        total += obj.loss(params, &refs)? * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Trains `init` with Adam.
///
/// Each epoch shuffles `train` with the seeded generator and steps once per
/// batch. When `val` is non-empty, the learning rate is multiplied by
/// `plateau_factor` (floored at `min_lr`) after every epoch that fails to
/// improve the best validation loss, training stops after
/// `early_stop_patience` such epochs in a row, and the best-validation
/// weights are returned. With an empty `val` both rules are off and the
/// final weights are returned.
///
/// `on_epoch` runs after every completed epoch with the current weights and
/// returns the path of the checkpoint it wrote, if any.
pub fn fit<O, F>(
    obj: &O,
    init: O::Params,
    train: &[O::Example],
    val: &[O::Example],
    schedule: &TrainSchedule,
    mut on_epoch: F,
) -> Result<(O::Params, TrainHistory)>
where
    O: Objective,
    F: FnMut(&EpochRecord, &O::Params) -> Result<Option<String>>,
{
    schedule.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.rng_seed);
    let mut params = init;
    let mut adam = AdamState::new(&params);
    let mut lr = schedule.initial_lr;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, O::Params)> = None;
    let mut stale = 0usize;

    for epoch in 1..=schedule.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(schedule.batch_size) {
            let batch: Vec<&O::Example> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, mut grad) = compute_gradients(obj, &params, &batch)?;
            if let Some(c) = schedule.clip_norm {
                clip_global_norm(&mut grad, c);
            }
            adam_step(&mut params, &grad, &mut adam, lr)?;
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;

        let val_loss = if val.is_empty() {
            None
        } else {
            Some(dataset_loss(obj, &params, val, schedule.batch_size)?)
        };
        if let Some(vl) = val_loss {
            if !vl.is_finite() {
                return Err(Error::NumericOverflow {
                    tensor: String::from("val_loss"),
                });
            }
            let improved = best.as_ref().is_none_or(|(b, _)| vl < *b);
            if improved {
                best = Some((vl, params.clone()));
                history.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                lr = (lr * schedule.plateau_factor).max(schedule.min_lr);
            }
        } else {
            history.best_epoch = epoch;
        }

        let mut record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            checkpoint_path: None,
        };
        record.checkpoint_path = on_epoch(&record, &params)?;
        history.epochs.push(record);

        if val_loss.is_some() && stale >= schedule.early_stop_patience {
            history.stopped_early = epoch < schedule.max_epochs;
            break;
        }
    }

    let out = match best {
        Some((_, p)) => p,
        None => params,
    };
    Ok((out, history))
}
