use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig};
use super::arch::{build_default_architecture, Architecture};
use super::compute::{batch_pass, forward_inputs, nll};
use super::params::NetworkParams;
use crate::dataset::{class_counts, LabeledSample, Split};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

const SEED_INIT: u64 = 0;
const SEED_SHUFFLE: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Positives are resampled each epoch up to this many per negative.
    pub min_positive_ratio: f64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            batch_size: 64,
            adam: AdamConfig::default(),
            min_positive_ratio: 1.0 / 3.0,
            architecture: build_default_architecture(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the epoch's batches, measured before each update.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub samples_seen: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub train_samples: usize,
    pub val_samples: usize,
    pub positives: usize,
    pub negatives: usize,
    pub epochs: Vec<EpochStats>,
}

/// Epoch order: every training index once, plus positives drawn with
/// replacement until they reach `ratio` per negative, shuffled.
fn epoch_order(train: &[&LabeledSample], ratio: f64, rng: &mut impl Rng) -> Vec<usize> {
    let pos: Vec<usize> = (0..train.len()).filter(|&i| train[i].is_positive()).collect();
    let neg = train.len() - pos.len();
    let want = (neg as f64 * ratio).ceil() as usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    if !pos.is_empty() {
        for _ in pos.len()..want {
            order.push(pos[rng.gen_range(0..pos.len())]);
        }
    }
    order.shuffle(rng);
    order
}

fn accuracy(probs: &[f64], labels: impl Iterator<Item = bool>) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p >= 0.5) == *y)
        .count();
    hits as f64 / probs.len().max(1) as f64
}

/// Trains from a fresh random-uniform initialization on the `Train` split and
/// reports `Validation` metrics after every epoch.
pub fn train(
    dataset: &[LabeledSample],
    config: &TrainConfig,
    seed: u64,
) -> Result<(NetworkParams, TrainLog)> {
    let train: Vec<&LabeledSample> = dataset
        .iter()
        .filter(|s| s.meta.split == Split::Train)
        .collect();
    let val: Vec<&LabeledSample> = dataset
        .iter()
        .filter(|s| s.meta.split == Split::Validation)
        .collect();
    let (positives, negatives) = class_counts(dataset);
    let train_pos = train.iter().filter(|s| s.is_positive()).count();
    if train_pos == 0 || train_pos == train.len() {
        return Err(Error::SingleClass {
            positives: train_pos,
            negatives: train.len() - train_pos,
        });
    }
    if config.batch_size == 0 {
        return Err(Error::EmptyBatch);
    }

    let mut params = NetworkParams::random_uniform(
        config.architecture.clone(),
        derive_seed(seed, &[SEED_INIT]),
    )?;
    let mut rng = rng_from(derive_seed(seed, &[SEED_SHUFFLE]));
    let mut log = TrainLog {
        train_samples: train.len(),
        val_samples: val.len(),
        positives,
        negatives,
        epochs: Vec::with_capacity(config.epochs),
    };

    for epoch in 0..config.epochs {
        let order = epoch_order(&train, config.min_positive_ratio, &mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0.0;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<(&[f32], bool)> = idx
                .iter()
                .map(|&i| (train[i].image.pixels.as_slice(), train[i].is_positive()))
                .collect();
            let (loss, grads, probs) = batch_pass(&params, &batch)?;
            loss_sum += loss * batch.len() as f64;
            hits += accuracy(&probs, batch.iter().map(|b| b.1)) * batch.len() as f64;
            let NetworkParams { tensors, adam, .. } = &mut params;
            adam_step(&config.adam, tensors, &grads, adam);
        }
        if !params.tensors.all_finite() {
            params.validate()?;
        }

        let (val_loss, val_accuracy) = if val.is_empty() {
            (None, None)
        } else {
            let inputs: Vec<&[f32]> = val.iter().map(|s| s.image.pixels.as_slice()).collect();
            let probs = forward_inputs(&params, &inputs)?;
            let loss = probs
                .iter()
                .zip(&val)
                .map(|(&p, s)| nll(p, s.is_positive()))
                .sum::<f64>()
                / val.len() as f64;
            (
                Some(loss),
                Some(accuracy(&probs, val.iter().map(|s| s.is_positive()))),
            )
        };
        let n = order.len();
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / n as f64,
            train_accuracy: hits / n as f64,
            val_loss,
            val_accuracy,
            samples_seen: n,
        };
        log::info!(
            "epoch {}: train loss {:.4} acc {:.3}, val loss {:?} acc {:?}",
            stats.epoch,
            stats.train_loss,
            stats.train_accuracy,
            stats.val_loss,
            stats.val_accuracy
        );
        log.epochs.push(stats);
    }
    Ok((params, log))
}
