use ndarray::s;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{adam_step, backward, forward, loss_ce, sgd_step, AdamState, ModelParams};
use crate::data::{ClientDataset, Dataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

fn default_epochs() -> usize {
    4
}
fn default_batch() -> usize {
    32
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingHyper {
    #[serde(default)]
    pub optimizer: Optimizer,
    /// Defaults to 1e-3 for Adam and 0.05 for SGD when unset.
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default = "default_epochs")]
    pub local_epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Shuffle seed for [`local_train`]. The federation loop overwrites it per
    /// client and round.
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainingHyper {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adam,
            learning_rate: None,
            local_epochs: default_epochs(),
            batch_size: default_batch(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            seed: 0,
        }
    }
}

impl TrainingHyper {
    pub fn learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.optimizer {
            Optimizer::Adam => 1e-3,
            Optimizer::Sgd => 0.05,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::invalid("adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// `local_epochs` passes of shuffled mini-batch updates over `shard`, starting
/// from `params`. The last partial batch of each epoch is kept. Adam state
/// starts fresh on every call.
pub fn local_train(params: &ModelParams, shard: &ClientDataset, hyper: &TrainingHyper) -> Result<ModelParams> {
    hyper.validate()?;
    if shard.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut current = params.clone();
    let mut adam = AdamState::fresh(params);
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let lr = hyper.learning_rate();
    for epoch in 0..hyper.local_epochs {
        order.shuffle(&mut rng::rng_for(hyper.seed, &[rng::STREAM_LOCAL, epoch as u64]));
        for batch in order.chunks(hyper.batch_size) {
            let (x, y) = shard.gather(batch);
            let (_, grads) = backward(&current, x.view(), &y)?;
            current = match hyper.optimizer {
                Optimizer::Sgd => sgd_step(&current, &grads, lr)?,
                Optimizer::Adam => {
                    let (next, state) = adam_step(&current, &grads, &adam, hyper)?;
                    adam = state;
                    next
                }
            };
        }
    }
    Ok(current)
}

const EVAL_CHUNK: usize = 1024;

/// Accuracy (argmax, ties to the lowest class id) and mean cross-entropy.
pub fn evaluate(params: &ModelParams, dataset: &Dataset) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for start in (0..dataset.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(dataset.len());
        let probs = forward(params, dataset.features().slice(s![start..end, ..]))?;
        let labels = &dataset.labels()[start..end];
        loss_sum += loss_ce(probs.view(), labels) * labels.len() as f64;
        for (row, &y) in probs.outer_iter().zip(labels) {
            let mut best = 0;
            for (k, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = k;
                }
            }
            if best == y {
                correct += 1;
            }
        }
    }
    let n = dataset.len() as f64;
    Ok((correct as f64 / n, loss_sum / n))
}
