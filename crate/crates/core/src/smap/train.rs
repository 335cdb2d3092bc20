//! Distillation training: Adam with polynomial learning-rate decay.

use super::{smap_forward, smap_gradients, smap_loss, SmapBatch, SmapParams};
use crate::error::{Error, Result};

/// Adam moment coefficients and epsilon (fixed, standard values).
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Hyperparameters of [`train_smap`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Initial learning rate.
    pub lr: f64,
    /// Full passes over the dataset.
    pub epochs: usize,
    /// Exponent of the polynomial decay `lr * (1 - t/t_max)^power`.
    pub poly_power: f64,
    /// Seed for parameter initialization.
    pub seed: u64,
    /// Attention heads of the freshly initialized model.
    pub heads: usize,
    /// Positional-encoding hidden width.
    pub pe_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 200,
            poly_power: 0.9,
            seed: 0,
            heads: super::DEFAULT_HEADS,
            pe_hidden: super::DEFAULT_PE_HIDDEN,
        }
    }
}

/// Loss trace of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean dataset loss before the first update.
    pub initial_loss: f64,
    /// Mean per-epoch training loss (evaluated before each step's update).
    pub epoch_losses: Vec<f64>,
    /// Mean dataset loss of the final parameters.
    pub final_loss: f64,
}

fn dataset_loss(dataset: &[SmapBatch], params: &SmapParams) -> Result<f64> {
    let mut acc = 0.0;
    for batch in dataset {
        let pooled = smap_forward(batch, params)?;
        acc += smap_loss(&pooled, batch.targets.as_ref().expect("targets checked"))?;
    }
    Ok(acc / dataset.len() as f64)
}

/// Trains a freshly initialized pooler on a distillation dataset.
///
/// Batches are visited in the given order every epoch (no shuffling); the
/// learning rate follows `lr * (1 - t/t_max)^poly_power` over the
/// `epochs * dataset.len()` update steps. The run is fully deterministic
/// given the config.
pub fn train_smap(
    dataset: &[SmapBatch],
    config: &TrainConfig,
) -> Result<(SmapParams, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !config.lr.is_finite() || config.lr < 0.0 {
        return Err(Error::NonFinite {
            what: "learning rate",
        });
    }
    if !config.poly_power.is_finite() || config.poly_power < 0.0 {
        return Err(Error::NonFinite { what: "poly power" });
    }
    let dim = dataset[0].dim();
    for batch in dataset {
        if batch.targets.is_none() {
            return Err(Error::MissingTargets);
        }
        if batch.dim() != dim {
            return Err(Error::DimMismatch {
                what: "dataset feature dimension",
                expected: dim,
                found: batch.dim(),
            });
        }
    }

    let mut params = SmapParams::init(dim, config.pe_hidden, config.heads, config.seed)?;
    let initial_loss = dataset_loss(dataset, &params)?;

    let mut flat = params.flatten();
    let mut m = vec![0.0; flat.len()];
    let mut v = vec![0.0; flat.len()];
    let t_max = (config.epochs * dataset.len()) as f64;
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut epoch_acc = 0.0;
        for batch in dataset {
            let (loss, grads) = smap_gradients(batch, &params)?;
            epoch_acc += loss;
            let g = grads.flatten();
            let lr_t = config.lr * (1.0 - step as f64 / t_max).powf(config.poly_power);
            step += 1;
            let bias1 = 1.0 - BETA1.powi(step as i32);
            let bias2 = 1.0 - BETA2.powi(step as i32);
            for i in 0..flat.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                flat[i] -= lr_t * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
            params = params.with_values(&flat)?;
        }
        epoch_losses.push(epoch_acc / dataset.len() as f64);
    }
    let final_loss = dataset_loss(dataset, &params)?;
    Ok((
        params,
        TrainReport {
            initial_loss,
            epoch_losses,
            final_loss,
        },
    ))
}
