use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PointerGenModel, Result, Seq2SeqError, TrainConfig, TrainingPair};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Rescales `grad` so its L2 norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

pub fn train(
    model: &mut PointerGenModel,
    train_pairs: &[TrainingPair],
    val_pairs: &[TrainingPair],
    config: &TrainConfig,
) -> Result<TrainReport> {
    train_with(model, train_pairs, val_pairs, config, |_| {})
}

/// Mini-batch Adam with global-norm clipping and per-epoch seeded shuffling.
/// Keeps the parameters with the lowest validation loss (training loss when
/// there is no validation set).
pub fn train_with(
    model: &mut PointerGenModel,
    train_pairs: &[TrainingPair],
    val_pairs: &[TrainingPair],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    if train_pairs.is_empty() {
        return Err(Seq2SeqError::EmptyTrainingSet);
    }
    let batch_size = config.batch_size.max(1);
    let mut adam = Adam::new(model.parameter_count(), config.learning_rate);
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut nll = 0.0;
        let mut tokens = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<TrainingPair> = chunk.iter().map(|&i| train_pairs[i].clone()).collect();
            let n: usize = batch.iter().map(|p| p.target.len()).sum();
            let (loss, mut grad) = model.loss_and_gradient(&batch)?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Seq2SeqError::NaNGuard);
            }
            clip_global_norm(&mut grad, config.grad_clip_norm);
            adam.step(model.parameters_mut(), &grad);
            nll += loss * n as f64;
            tokens += n;
        }
        let train_loss = nll / tokens.max(1) as f64;
        let val_loss = if val_pairs.is_empty() {
            train_loss
        } else {
            model.loss(val_pairs)?
        };
        let log = EpochLog {
            epoch,
            train_loss,
            val_loss,
        };
        on_epoch(&log);
        epochs.push(log);
        if best.as_ref().is_none_or(|b| val_loss < b.1) {
            best = Some((epoch, val_loss, model.parameters().to_vec()));
        }
    }

    let (best_epoch, best_val_loss) = match best {
        Some((e, l, params)) => {
            model.parameters_mut().copy_from_slice(&params);
            (e, l)
        }
        None => (0, f64::NAN),
    };
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_val_loss,
    })
}
