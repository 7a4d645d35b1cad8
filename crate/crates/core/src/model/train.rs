use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::{accuracy, forward, loss_and_gradients, masked_cross_entropy, ModelInput};
use super::{ModelConfig, ModelParameters};
use crate::error::{Error, Result};

/// Optimizer and stopping settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Stop once this many epochs pass without a better validation score.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            patience: 40,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::input(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::input(format!(
                "weight decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if self.epochs == 0 {
            return Err(Error::input("epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: ModelParameters,
    v: ModelParameters,
}

impl Adam {
    pub fn new(cfg: &ModelConfig, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: ModelParameters::zeros(cfg),
            v: ModelParameters::zeros(cfg),
        }
    }

    pub fn step(&mut self, params: &mut ModelParameters, grads: &ModelParameters) {
        self.step += 1;
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            adam_update(
                p.as_mut_slice(),
                g.as_slice(),
                m.as_mut_slice(),
                v.as_mut_slice(),
                self.step,
                (self.lr, self.beta1, self.beta2, self.eps),
            );
        }
    }
}

/// One bias-corrected Adam update of `p` in place; `hyper` is
/// `(lr, beta1, beta2, eps)` and `step` counts from 1.
pub(crate) fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], step: i32, hyper: (f64, f64, f64, f64)) {
    let (lr, b1, b2, eps) = hyper;
    let c1 = 1.0 - b1.powi(step);
    let c2 = 1.0 - b2.powi(step);
    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Full training objective at the start of the epoch (with dropout).
    pub train_loss: f64,
    /// Accuracy on the training nodes after the update (no dropout).
    pub train_acc: f64,
    pub val_acc: f64,
    /// Cross-entropy on the validation nodes after the update.
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub params: ModelParameters,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_val_loss: f64,
}

/// Full-batch training with early stopping on validation accuracy (ties go
/// to the lower validation loss). One seeded generator drives initialization
/// and then dropout.
pub fn train(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    input: &ModelInput<'_>,
    labels: &[usize],
    train_mask: &[bool],
    val_mask: &[bool],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tc.validate()?;
    let n = input.n();
    if train_mask.len() != n || val_mask.len() != n {
        return Err(Error::input("split masks must have one entry per node"));
    }
    if train_mask.iter().zip(val_mask).any(|(&a, &b)| a && b) {
        return Err(Error::input("train and validation masks overlap"));
    }
    if !train_mask.contains(&true) {
        return Err(Error::input("training mask is empty"));
    }
    if !val_mask.contains(&true) {
        return Err(Error::input("validation mask is empty"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut params = ModelParameters::init(cfg, &mut rng);
    let mut adam = Adam::new(cfg, tc.lr);
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_loss = f64::INFINITY;

    for epoch in 0..tc.epochs {
        let step = loss_and_gradients(
            &params,
            cfg,
            input,
            labels,
            train_mask,
            tc.weight_decay,
            true,
            Some(&mut rng),
        )?;
        if !step.loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss: step.loss });
        }
        adam.step(&mut params, &step.grads);

        let eval = forward(&params, cfg, input, false, None)?;
        let val_loss = masked_cross_entropy(&eval.logits, labels, val_mask);
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss: val_loss });
        }
        let rec = EpochRecord {
            epoch,
            train_loss: step.loss,
            train_acc: accuracy(&eval.prediction, labels, train_mask)?,
            val_acc: accuracy(&eval.prediction, labels, val_mask)?,
            val_loss,
        };
        history.push(rec);
        if rec.val_acc > best_acc || (rec.val_acc == best_acc && rec.val_loss < best_loss) {
            best_acc = rec.val_acc;
            best_loss = rec.val_loss;
            best_epoch = epoch;
            best.clone_from(&params);
        }
        if epoch - best_epoch >= tc.patience {
            debug!("early stop at epoch {epoch}, best epoch {best_epoch}");
            break;
        }
    }

    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch,
        best_val_acc: best_acc,
        best_val_loss: best_loss,
    })
}
