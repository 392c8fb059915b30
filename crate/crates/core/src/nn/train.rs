use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AdamState, LossKind, ModelInput, ModelSpec, Network, Variant};
use crate::error::{Error, Result};
use crate::ingest::{chrono_split, SplitSpec, WindowedDataset};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    /// Chronological training fraction; the rest is validation.
    pub split: f64,
    /// Stop after this many epochs without a new best validation loss.
    pub patience: Option<usize>,
    pub learning_rate: f64,
    /// Global gradient-norm ceiling applied before each optimiser step.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 4,
            loss: LossKind::Mae,
            split: 0.7,
            patience: None,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// Epoch presets for the standard window sizes.
pub fn default_epochs(variant: Variant, window: usize) -> Option<usize> {
    match (variant, window) {
        (Variant::Fnn, 0) => Some(120),
        (Variant::Fnn, 7) => Some(80),
        (Variant::Fnn, 14) => Some(90),
        (Variant::Fnn, 28) => Some(120),
        (Variant::Lstm, 7) => Some(125),
        (Variant::Lstm, 14) => Some(210),
        (Variant::Lstm, 28) => Some(225),
        (Variant::EncoderDecoder, 7) => Some(200),
        (Variant::EncoderDecoder, 14 | 28) => Some(250),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Full-pass training loss after each epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch (0-based) with the lowest validation loss.
    pub best_epoch: Option<usize>,
    pub restored_best: bool,
    pub stopped_early: bool,
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    /// Optimiser steps whose gradient was rescaled.
    pub clipped_steps: usize,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    /// Writes `epoch,train_loss,val_loss`, epochs counted from 1.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            w.write_record([(e + 1).to_string(), t.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn sample(ds: &WindowedDataset, k: usize) -> ModelInput<'_> {
    ModelInput {
        window: &ds.inputs[k],
        covariates: ds.covariates[k],
    }
}

pub fn predict_dataset(network: &Network, ds: &WindowedDataset) -> Result<Vec<Vec<f64>>> {
    (0..ds.len()).map(|k| network.predict(&sample(ds, k))).collect()
}

/// Mean per-sample loss over a dataset.
pub fn evaluate_loss(network: &Network, ds: &WindowedDataset, loss: LossKind) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for k in 0..ds.len() {
        let p = network.predict(&sample(ds, k))?;
        total += loss.eval(&p, &ds.targets[k])?.0;
    }
    Ok(total / ds.len() as f64)
}

fn check_config(config: &TrainConfig) -> Result<()> {
    if config.batch_size == 0 {
        return Err(Error::config("batch_size", "must be at least 1"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::config("learning_rate", "must be positive"));
    }
    if !(config.clip_norm > 0.0) {
        return Err(Error::config("clip_norm", "must be positive"));
    }
    Ok(())
}

/// Mini-batch training with Adam.
///
/// Initial weights come from `derive_seed(seed, 0)` and the per-epoch batch
/// order from `derive_seed(seed, 1)`, so a seed fixes the whole run. After
/// the last epoch the weights of the best validation epoch are restored.
pub fn train(spec: &ModelSpec, dataset: &WindowedDataset, config: &TrainConfig) -> Result<(Network, TrainHistory)> {
    check_config(config)?;
    if dataset.window != spec.window || dataset.n_features != spec.n_features {
        return Err(Error::dims(format!(
            "dataset has window {} and {} features, model expects {} and {}",
            dataset.window, dataset.n_features, spec.window, spec.n_features
        )));
    }
    let (train_ds, val_ds) = chrono_split(dataset, SplitSpec::new(config.split)?)?;
    if train_ds.len() < config.batch_size {
        return Err(Error::TooFewSamples {
            needed: config.batch_size,
            have: train_ds.len(),
        });
    }
    if val_ds.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut network = Network::init(spec, &mut rng(derive_seed(config.seed, 0)))?;
    let mut order_rng = rng(derive_seed(config.seed, 1));
    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(config.epochs),
        val_loss: Vec::with_capacity(config.epochs),
        best_epoch: None,
        restored_best: false,
        stopped_early: false,
        initial_train_loss: evaluate_loss(&network, &train_ds, config.loss)?,
        initial_val_loss: evaluate_loss(&network, &val_ds, config.loss)?,
        clipped_steps: 0,
    };

    let mut params = network.flat_params();
    let mut adam = AdamState::new(params.len(), config.learning_rate);
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut grad = vec![0.0; params.len()];

    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        for batch in order.chunks(config.batch_size) {
            grad.fill(0.0);
            for &k in batch {
                let (pred, cache) = network.forward_cached(&sample(&train_ds, k))?;
                let (_, d_out) = config.loss.eval(&pred, &train_ds.targets[k])?;
                let g = network.backward(&cache, &d_out)?.flat_params();
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|v| *v *= scale);
            let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > config.clip_norm {
                let shrink = config.clip_norm / norm;
                grad.iter_mut().for_each(|v| *v *= shrink);
                history.clipped_steps += 1;
                log::debug!("epoch {}: gradient norm {norm:.3} clipped to {}", epoch + 1, config.clip_norm);
            }
            adam.step(&mut params, &grad)?;
            network.set_flat_params(&params)?;
        }

        let tl = evaluate_loss(&network, &train_ds, config.loss)?;
        let vl = evaluate_loss(&network, &val_ds, config.loss)?;
        history.train_loss.push(tl);
        history.val_loss.push(vl);
        if vl < best_val {
            best_val = vl;
            best_params.copy_from_slice(&params);
            history.best_epoch = Some(epoch);
        }
        log::trace!("epoch {}: train {tl:.6} val {vl:.6}", epoch + 1);
        if let (Some(p), Some(best)) = (config.patience, history.best_epoch) {
            if epoch - best >= p {
                history.stopped_early = true;
                break;
            }
        }
    }

    if history.clipped_steps > 0 {
        log::info!("gradient clipping triggered on {} steps", history.clipped_steps);
    }
    if let Some(best) = history.best_epoch {
        if best + 1 != history.epochs_run() {
            network.set_flat_params(&best_params)?;
            history.restored_best = true;
        }
    }
    Ok((network, history))
}
