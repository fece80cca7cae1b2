//! Mini-batch gradient-descent training of the linear critic.
//!
//! The objective is the mean pairwise loss over the dataset plus an L2
//! penalty `(l2/2)·‖w‖²`. Because the loss depends only on the score gap,
//! the bias cancels and never receives gradient; it stays at its initial
//! value. Training is deterministic under a fixed seed: batch order comes
//! from a seeded shuffle and gradients accumulate in index order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::rng_for;

use super::features::{FeatureExtractor, SparseFeatures};
use super::{loss_from_gap, sigmoid, LinearCritic, PreferenceTuple, ScoreError};

/// Training failures.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid tuple {index}: {reason}")]
    InvalidTuple { index: usize, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss at epoch {epoch}; aborting (last finite loss {last_loss})")]
    NonFiniteLoss { epoch: usize, last_loss: f64 },

    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 20,
            batch_size: 32,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::InvalidConfig(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.l2 < 0.0 {
            return Err(TrainError::InvalidConfig("l2 must be >= 0".into()));
        }
        Ok(())
    }
}

/// A preference tuple reduced to its feature difference `φ(a+) - φ(a-)`.
#[derive(Debug, Clone)]
pub struct PreparedTuple {
    pub diff: SparseFeatures,
}

/// Featurizes the dataset once up front.
pub fn prepare_dataset(
    extractor: &FeatureExtractor,
    dataset: &[PreferenceTuple],
) -> Result<Vec<PreparedTuple>, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    dataset
        .iter()
        .enumerate()
        .map(|(index, tuple)| {
            tuple
                .validate()
                .map_err(|reason| TrainError::InvalidTuple { index, reason })?;
            let plus = extractor.extract(&tuple.state, &tuple.preferred)?;
            let minus = extractor.extract(&tuple.state, &tuple.rejected)?;
            Ok(PreparedTuple {
                diff: plus.minus(&minus),
            })
        })
        .collect()
}

/// The training objective: mean pairwise loss plus `(l2/2)·‖w‖²`.
pub fn objective(weights: &[f64], prepared: &[PreparedTuple], l2: f64) -> f64 {
    let mean_loss = prepared
        .iter()
        .map(|t| loss_from_gap(t.diff.dot(weights)))
        .sum::<f64>()
        / prepared.len() as f64;
    let penalty = 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    mean_loss + penalty
}

/// Analytic gradient of [`objective`] with respect to the weights.
pub fn gradient(weights: &[f64], prepared: &[PreparedTuple], l2: f64) -> Vec<f64> {
    let mut grad = vec![0.0; weights.len()];
    accumulate_loss_gradient(weights, prepared, &mut grad);
    for (g, w) in grad.iter_mut().zip(weights.iter()) {
        *g += l2 * w;
    }
    grad
}

/// Adds the mean-loss gradient of `prepared` into `grad` (dense buffer).
fn accumulate_loss_gradient(weights: &[f64], prepared: &[PreparedTuple], grad: &mut [f64]) {
    // d loss / d gap = σ(gap) - 1; gradient in index order for determinism.
    let scale = 1.0 / prepared.len() as f64;
    let mut sparse: BTreeMap<u32, f64> = BTreeMap::new();
    for tuple in prepared {
        let gap = tuple.diff.dot(weights);
        let coefficient = (sigmoid(gap) - 1.0) * scale;
        for &(i, v) in &tuple.diff.entries {
            *sparse.entry(i).or_insert(0.0) += coefficient * v;
        }
    }
    for (i, v) in sparse {
        grad[i as usize] += v;
    }
}

/// Result of training: the critic plus the per-epoch mean training loss.
/// `loss_curve[0]` is the loss of the initial critic before any update, so
/// a zero-initialized critic always starts at `ln 2`.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub critic: LinearCritic,
    pub loss_curve: Vec<f64>,
}

/// Trains a linear critic on the preference dataset with mini-batch
/// gradient descent.
pub fn train(
    extractor: FeatureExtractor,
    dataset: &[PreferenceTuple],
    config: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    config.validate()?;
    let prepared = prepare_dataset(&extractor, dataset)?;
    let mut critic = LinearCritic::zeroed(extractor);
    let mut loss_curve = Vec::with_capacity(config.epochs + 1);
    loss_curve.push(mean_loss(&critic.weights, &prepared));

    let mut order: Vec<usize> = (0..prepared.len()).collect();
    for epoch in 1..=config.epochs {
        let mut rng = rng_for(config.seed, &format!("critic-epoch/{epoch}"));
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let batch_tuples: Vec<PreparedTuple> =
                batch.iter().map(|&i| prepared[i].clone()).collect();
            apply_batch_update(&mut critic.weights, &batch_tuples, config);
        }
        let epoch_loss = mean_loss(&critic.weights, &prepared);
        if !epoch_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                last_loss: *loss_curve.last().expect("curve is non-empty"),
            });
        }
        loss_curve.push(epoch_loss);
    }
    Ok(TrainOutput { critic, loss_curve })
}

fn apply_batch_update(weights: &mut [f64], batch: &[PreparedTuple], config: &TrainConfig) {
    let lr = config.learning_rate;
    // Decay from the L2 term first, then the sparse loss gradient.
    if config.l2 > 0.0 {
        let decay = 1.0 - lr * config.l2;
        for w in weights.iter_mut() {
            *w *= decay;
        }
    }
    let mut grad = vec![0.0; weights.len()];
    accumulate_loss_gradient(weights, batch, &mut grad);
    for (w, g) in weights.iter_mut().zip(grad.iter()) {
        *w -= lr * g;
    }
}

fn mean_loss(weights: &[f64], prepared: &[PreparedTuple]) -> f64 {
    prepared
        .iter()
        .map(|t| loss_from_gap(t.diff.dot(weights)))
        .sum::<f64>()
        / prepared.len() as f64
}

/// Fraction of tuples whose preferred action outscores the rejected one;
/// exact ties count 0.5.
pub fn eval_pairwise_accuracy(
    scorer: &dyn super::ActionScorer,
    dataset: &[PreferenceTuple],
) -> Result<f64, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut total = 0.0;
    for tuple in dataset {
        let plus = scorer.score(&tuple.state, &tuple.preferred)?;
        let minus = scorer.score(&tuple.state, &tuple.rejected)?;
        total += if plus > minus {
            1.0
        } else if plus == minus {
            0.5
        } else {
            0.0
        };
    }
    Ok(total / dataset.len() as f64)
}
