use std::time::Instant;

use rayon::prelude::*;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::early_stop::{EarlyStopping, Verdict};
use crate::autograd::Graph;
use crate::data::{stack_input, AugmentParams, AugmentedSample};
use crate::error::{bail, Error, Result};
use crate::kernels::Mode;
use crate::metrics::{confusion_and_accuracy, roc_auc, MetricsReport, THRESHOLD};
use crate::models::Classifier;
use crate::nn::ParamStore;
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monitor {
    Auc,
    Accuracy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub monitor: Monitor,
    /// Random flips and rotations on training batches.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-5,
            weight_decay: 5e-4,
            max_epochs: 100,
            patience: 20,
            batch_size: 16,
            seed: 0,
            monitor: Monitor::Auc,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bail!(Config, "learning rate must be positive, got {}", self.lr);
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            bail!(Config, "weight decay must be non-negative, got {}", self.weight_decay);
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            bail!(Config, "max_epochs and batch_size must be positive");
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            bail!(Config, "patience {} must lie in 1..=max_epochs ({})", self.patience, self.max_epochs);
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: Option<f64>,
    pub val_accuracy: f64,
    pub elapsed_s: f64,
}

impl EpochLog {
    pub const HEADER: &'static str = "epoch,train_loss,val_auc,val_accuracy,elapsed_s";

    pub fn csv_row(&self) -> String {
        let auc = self.val_auc.map(|a| a.to_string()).unwrap_or_default();
        format!("{},{},{},{},{:.3}", self.epoch, self.train_loss, auc, self.val_accuracy, self.elapsed_s)
    }

    pub fn monitored(&self, monitor: Monitor) -> f64 {
        match monitor {
            Monitor::Auc => self.val_auc.unwrap_or(f64::NAN),
            Monitor::Accuracy => self.val_accuracy,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub stopped_early: bool,
    /// Optimizer state as of the best epoch.
    pub optimizer: Adam<T>,
}

/// Stacked, optionally augmented inputs for `samples`, as one batch.
pub fn make_batch<T: Scalar>(samples: &[&AugmentedSample], augment: Option<(u64, usize)>) -> Result<Tensor<T>> {
    let parts = samples
        .par_iter()
        .map(|s| {
            let x = stack_input(s)?;
            Ok(match augment {
                Some((seed, epoch)) => {
                    let mut r = rng::keyed_stream(seed, "augment", &format!("{epoch}:{}", s.id));
                    AugmentParams::draw(&mut r).apply(&x)
                }
                None => x,
            }
            .cast::<T>())
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack_batch(&parts.iter().collect::<Vec<_>>())
}

/// Eval-mode positive-class probabilities in sample order.
pub fn predict<T: Scalar, M: Classifier<T>>(model: &mut M, samples: &[AugmentedSample], batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&AugmentedSample> = chunk.iter().collect();
        out.extend(model.positive_probability(&make_batch::<T>(&refs, None)?)?);
    }
    Ok(out)
}

pub fn evaluate<T: Scalar, M: Classifier<T>>(model: &mut M, samples: &[AugmentedSample], batch_size: usize) -> Result<MetricsReport> {
    let scores = predict(model, samples, batch_size)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    MetricsReport::compute(&scores, &labels)
}

/// Trains with Adam and early stopping, then restores the weights of the
/// best monitored epoch. `on_epoch` sees every epoch's log as it finishes.
pub fn train<T: Scalar, M: Classifier<T>>(
    model: &mut M,
    train: &[AugmentedSample],
    val: &[AugmentedSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        bail!(Input, "train ({}) and val ({}) splits must be non-empty", train.len(), val.len());
    }
    let val_labels: Vec<usize> = val.iter().map(|s| s.label).collect();
    if cfg.monitor == Monitor::Auc && (val_labels.iter().all(|&l| l == 0) || val_labels.iter().all(|&l| l == 1)) {
        bail!(MetricUndefined, "validation split holds a single class, AUC cannot be monitored");
    }

    let start = Instant::now();
    let mut adam = Adam::new(cfg.adam(), model.params());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: Option<(ParamStore<T>, ParamStore<T>, Adam<T>)> = None;
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, "shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&AugmentedSample> = chunk.iter().map(|&i| &train[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
            let x = make_batch::<T>(&batch, cfg.augment.then_some((cfg.seed, epoch)))?;
            let step = || -> Result<f64> {
                let mut g = Graph::new();
                let xv = g.constant(x);
                let (logits, bind) = model.forward(&mut g, xv, Mode::Train)?;
                let loss = g.cross_entropy(logits, &labels)?;
                let value = g.value(loss).item().as_f64();
                if !value.is_finite() {
                    bail!(NonFinite, "loss is {value}");
                }
                g.backward(loss)?;
                adam.step(model.params_mut(), &bind.grads(&g))?;
                Ok(value)
            };
            let value = step().map_err(|e| match e {
                Error::NonFinite(m) => Error::Diverged(format!("epoch {epoch}, batch {b}: {m}")),
                other => other,
            })?;
            loss_sum += value * chunk.len() as f64;
        }

        let scores = predict(model, val, cfg.batch_size)?;
        let val_auc = roc_auc(&scores, &val_labels).ok().map(|r| r.auc);
        let (_, val_accuracy) = confusion_and_accuracy(&scores, &val_labels, THRESHOLD)?;
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_auc,
            val_accuracy,
            elapsed_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&log)?;
        let verdict = stopper.observe(epoch, log.monitored(cfg.monitor));
        history.push(log);
        if verdict == Verdict::Improved {
            best = Some((model.params().clone(), model.buffers().clone(), adam.clone()));
        }
        if verdict == Verdict::Stop {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }

    let Some((best_epoch, best_metric)) = stopper.best() else {
        bail!(MetricUndefined, "no epoch produced a finite monitored metric");
    };
    let (params, buffers, optimizer) = best.expect("best state recorded with the best metric");
    *model.params_mut() = params;
    *model.buffers_mut() = buffers;
    Ok(TrainOutcome { history, best_epoch, best_metric, stopped_early, optimizer })
}
