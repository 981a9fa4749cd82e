//! Minibatch PIT training: per-item gradients, Adam, learning-rate decay.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;


use super::{Mode, Network};
use crate::chunker::ChunkView;
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::pitloss::{best_permutation, chunk_error_frames, psm_mse_grad, LossContext, Permutation};
use crate::rng::derive_seed;
// Float math comes from libm here; test builds link std, which shadows it.
#[allow(unused_imports)]
use num_traits::Float;

/// One training unit: a whole utterance (uPIT) or a context-sensitive chunk (cPIT).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainItem {
    /// Mixture magnitudes over the forwarded frames.
    pub features: Matrix,
    /// `clamp(PSM) * |Y|` per source over the same frames.
    pub targets: Vec<Matrix>,
    /// Frames that generate error.
    pub error_frames: Range<usize>,
}

impl TrainItem {
    pub fn utterance(features: Matrix, targets: Vec<Matrix>) -> Self {
        let error_frames = 0..features.rows();
        Self { features, targets, error_frames }
    }

    /// `features`/`targets` must already be cut to the chunk's CSC window.
    pub fn chunk(features: Matrix, targets: Vec<Matrix>, chunk: &ChunkView) -> Result<Self> {
        if features.rows() != chunk.csc_window().len() {
            return Err(invalid!("chunk window has {} frames, features {}", chunk.csc_window().len(), features.rows()));
        }
        Ok(Self { features, targets, error_frames: chunk_error_frames(chunk) })
    }

    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    fn context(&self, sources: usize) -> LossContext {
        LossContext::new(sources, self.features.cols(), self.error_frames.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemGradient {
    pub loss: f64,
    pub permutation: Permutation,
    pub grad: Vec<f64>,
}

/// PIT loss of one item under its best permutation and the matching gradient.
pub fn item_gradient(net: &Network, item: &TrainItem, dropout_seed: u64) -> Result<ItemGradient> {
    let pass = net.forward(&item.features, None, Mode::Train { dropout_seed }, item.frames())?;
    let ctx = item.context(net.config().num_outputs);
    let (permutation, loss) = best_permutation(&pass.masks, &item.features, &item.targets, &ctx)?;
    let dmasks = psm_mse_grad(&pass.masks, &item.features, &item.targets, &permutation, &ctx)?;
    let grad = net.backward(&pass, &dmasks)?;
    Ok(ItemGradient { loss, permutation, grad })
}

/// Mean PIT loss over `items` in inference mode (no dropout).
pub fn validation_loss(net: &Network, items: &[TrainItem]) -> Result<f64> {
    if items.is_empty() {
        return Err(invalid!("no validation items"));
    }
    let mut total = 0.0;
    for item in items {
        let pass = net.forward(&item.features, None, Mode::Infer, item.frames())?;
        let ctx = item.context(net.config().num_outputs);
        total += best_permutation(&pass.masks, &item.features, &item.targets, &ctx)?.1;
    }
    Ok(total / items.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainSchedule {
    pub initial_lr: f64,
    /// Multiplier applied when validation loss rises.
    pub decay_factor: f64,
    pub epochs: usize,
    /// Utterances (uPIT) or chunks (cPIT) per minibatch.
    pub batch_units: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self { initial_lr: 0.0005, decay_factor: 0.7, epochs: 8, batch_units: 4, max_grad_norm: None }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) {
            return Err(invalid!("initial learning rate must be positive"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(invalid!("decay factor {} outside (0, 1)", self.decay_factor));
        }
        if self.batch_units == 0 {
            return Err(invalid!("batch must hold at least one unit"));
        }
        Ok(())
    }
}

/// Multiplies `lr` by the decay factor when the latest validation loss is
/// higher than the one before it.
pub fn maybe_decay(history: &[f64], lr: f64, schedule: &TrainSchedule) -> f64 {
    match history {
        [.., prev, last] if last > prev => lr * schedule.decay_factor,
        _ => lr,
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// Mean batch loss before the update.
    pub loss: f64,
    pub permutations: Vec<Permutation>,
}

/// Owns the network and optimizer state for one training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub network: Network,
    pub optimizer: Adam,
    pub lr: f64,
    pub max_grad_norm: Option<f64>,
    steps: u64,
}

impl Trainer {
    pub fn new(network: Network, schedule: &TrainSchedule) -> Result<Self> {
        schedule.validate()?;
        let optimizer = Adam::new(network.params().len());
        Ok(Self { network, optimizer, lr: schedule.initial_lr, max_grad_norm: schedule.max_grad_norm, steps: 0 })
    }

    pub fn from_parts(network: Network, optimizer: Adam, lr: f64, max_grad_norm: Option<f64>) -> Result<Self> {
        if optimizer.m.len() != network.params().len() || optimizer.v.len() != network.params().len() {
            return Err(invalid!("optimizer state does not match the parameter count"));
        }
        let steps = optimizer.step;
        Ok(Self { network, optimizer, lr, max_grad_norm, steps })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Dropout seed for item `index` of the next step.
    pub fn dropout_seed(&self, index: usize) -> u64 {
        derive_seed(self.network.config().seed, &[self.steps, index as u64])
    }

    /// Computes per-item gradients in order, then applies one update.
    pub fn train_step(&mut self, batch: &[TrainItem]) -> Result<StepReport> {
        let results = batch
            .iter()
            .enumerate()
            .map(|(i, item)| item_gradient(&self.network, item, self.dropout_seed(i)))
            .collect::<Result<Vec<_>>>()?;
        self.apply(results)
    }

    /// Averages item gradients (in the given order) and takes an Adam step.
    /// Parallel drivers compute [`item_gradient`] themselves and call this.
    pub fn apply(&mut self, results: Vec<ItemGradient>) -> Result<StepReport> {
        if results.is_empty() {
            return Err(invalid!("empty batch"));
        }
        let n = results.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.network.params().len()];
        let mut permutations = Vec::with_capacity(results.len());
        for (i, r) in results.into_iter().enumerate() {
            if !r.loss.is_finite() {
                return Err(Error::Numerical(format!("loss {} on batch item {i} at step {}", r.loss, self.steps)));
            }
            loss += r.loss;
            for (g, v) in grad.iter_mut().zip(&r.grad) {
                *g += v;
            }
            permutations.push(r.permutation);
        }
        loss /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        if let Some(max) = self.max_grad_norm {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > max {
                let k = max / norm;
                grad.iter_mut().for_each(|g| *g *= k);
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient at step {}", self.steps)));
        }
        self.optimizer.update(self.network.params_mut(), &grad, self.lr);
        self.steps += 1;
        Ok(StepReport { loss, permutations })
    }
}
