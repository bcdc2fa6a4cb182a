use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::network::argmax;
use crate::rng::{derive_seed_n, rng_from_seed};
use crate::{Error, Result};

/// Anything the training loop can optimize: a flat parameter vector, a
/// train-mode gradient for one example and an eval-mode class distribution.
pub trait Model {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Evaluation-mode log class probabilities.
    fn log_proba(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Training-mode cross-entropy loss of one example. Adds the loss
    /// gradient w.r.t. the parameters into `grad` and returns
    /// `(loss, predicted class)`. `seed` fixes any stochastic layers.
    fn accumulate_gradient(&self, x: &[f64], label: usize, seed: u64, grad: &mut [f64]) -> Result<(f64, usize)>;
}

/// One labeled, flattened feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example<'a> {
    pub x: &'a [f64],
    pub label: usize,
}

/// Source of wall-clock seconds; the core has no clock of its own.
pub trait Clock {
    fn now(&self) -> f64;
}

/// A clock that never advances.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 32, max_epochs: 100, patience: 10, adam: AdamConfig::default(), seed: 0, shuffle: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub stop_reason: StopReason,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.metrics.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[actual][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Accuracy, mean cross-entropy and confusion matrix in evaluation mode.
pub fn evaluate<M: Model + ?Sized>(model: &M, set: &[Example<'_>]) -> Result<Evaluation> {
    if set.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let mut confusion: Vec<Vec<usize>> = Vec::new();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in set {
        let logp = model.log_proba(ex.x)?;
        let n = logp.len();
        if ex.label >= n {
            return Err(Error::InvalidLabel { label: ex.label, n_classes: n });
        }
        if confusion.len() < n {
            confusion.resize(n, Vec::new());
            for row in &mut confusion {
                row.resize(n, 0);
            }
        }
        let pred = argmax(&logp);
        confusion[ex.label][pred] += 1;
        correct += usize::from(pred == ex.label);
        loss -= logp[ex.label];
    }
    Ok(Evaluation {
        accuracy: correct as f64 / set.len() as f64,
        mean_loss: loss / set.len() as f64,
        confusion,
    })
}

/// Mini-batch Adam with early stopping on validation loss.
///
/// Stops after `patience` consecutive epochs without a strict improvement in
/// validation loss, or at `max_epochs`. On return the model holds the
/// parameters of the best-validation epoch.
pub fn train<M: Model + ?Sized>(
    model: &mut M,
    train_set: &[Example<'_>],
    val_set: &[Example<'_>],
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Empty("training and validation sets must be non-empty".into()));
    }
    if cfg.batch_size == 0 || cfg.patience == 0 || cfg.max_epochs == 0 {
        return Err(Error::Config("batch_size, patience and max_epochs must be >= 1".into()));
    }
    let width = train_set[0].x.len();
    if train_set.iter().chain(val_set).any(|e| e.x.len() != width) {
        return Err(Error::InvalidArgument("train/val feature lengths differ".into()));
    }

    let n_params = model.params().len();
    let mut adam = AdamState::new(n_params);
    let mut grad = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::new();
    let mut best_params = model.params().to_vec();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let started = clock.now();
        if cfg.shuffle {
            order.shuffle(&mut rng_from_seed(derive_seed_n(cfg.seed, &[epoch as u64])));
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.fill(0.0);
            let mut batch_loss = 0.0;
            for (j, &i) in batch.iter().enumerate() {
                let ex = train_set[i];
                let seed = derive_seed_n(cfg.seed, &[epoch as u64, b as u64, j as u64]);
                let (loss, pred) = model.accumulate_gradient(ex.x, ex.label, seed, &mut grad)?;
                batch_loss += loss;
                correct += usize::from(pred == ex.label);
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&cfg.adam, model.params_mut(), &grad);
        }
        let val = evaluate(model, val_set)?;
        if !val.mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_loss: val.mean_loss,
            val_acc: val.accuracy,
            wall_seconds: clock.now() - started,
        };
        log::debug!(
            "epoch {epoch}: train_loss {:.4} train_acc {:.3} val_loss {:.4} val_acc {:.3}",
            m.train_loss,
            m.train_acc,
            m.val_loss,
            m.val_acc
        );
        metrics.push(m);
        if val.mean_loss < best_val {
            best_val = val.mean_loss;
            best_epoch = epoch;
            best_params.copy_from_slice(model.params());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    Ok(TrainOutcome { metrics, stop_reason, best_epoch, best_val_loss: best_val })
}
