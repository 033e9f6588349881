use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::task::Dataset;
use crate::error::{Error, Result};
use crate::lstm::{Classifier, Sequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2: f64,
    /// Dropout probability on `h[T]` before the head, training only.
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            l2: adam.l2,
            dropout: 0.25,
            batch_size: 16,
            epochs: 50,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            l2: self.l2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "train.dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("train.lr must be positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("train.beta1 and train.beta2 must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0 && self.l2 >= 0.0) {
            return Err(Error::Config(
                "train.eps must be positive and train.l2 non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss over the epoch's minibatches, with dropout.
    pub train_loss: f64,
    /// Dropout-free accuracy on the training split after the epoch.
    pub train_acc: f64,
    pub test_acc: f64,
}

pub type History = Vec<EpochMetrics>;

pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,test_acc\n");
    for m in history {
        writeln!(
            out,
            "{},{:.6},{:.4},{:.4}",
            m.epoch, m.train_loss, m.train_acc, m.test_acc
        )
        .unwrap();
    }
    out
}

/// Fraction of `data` classified correctly, evaluated without dropout.
pub fn accuracy(model: &Classifier, data: &[Sequence], batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Argument("accuracy of an empty split".into()));
    }
    let mut correct = 0;
    for chunk in data.chunks(batch_size.max(1)) {
        let seqs: Vec<&[Vec<f64>]> = chunk.iter().map(|s| s.frames.as_slice()).collect();
        let preds = model.predict_batch(&seqs)?;
        correct += preds.iter().zip(chunk).filter(|(p, s)| **p == s.label).count();
    }
    Ok(correct as f64 / data.len() as f64)
}

fn dropout_mask(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Minibatch ADAM training. Batches are reshuffled each epoch from
/// `config.seed`; the final partial batch is kept.
pub fn train(model: &mut Classifier, data: &Dataset, config: &TrainConfig) -> Result<History> {
    config.validate()?;
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::Argument("training needs non-empty train and test splits".into()));
    }
    if model.head.classes() != data.classes {
        return Err(Error::Size {
            what: "classifier classes",
            expected: data.classes,
            actual: model.head.classes(),
        });
    }
    let lens: Vec<usize> = model.param_blocks_mut().iter().map(|(_, b)| b.len()).collect();
    let mut opt = Adam::new(config.adam(), &lens);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let hidden = model.cell.hidden_size();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<Sequence> = idx.iter().map(|&i| data.train[i].clone()).collect();
            let mask = (config.dropout > 0.0).then(|| dropout_mask(&mut rng, batch.len() * hidden, config.dropout));
            let out = model.bptt(&batch, mask.as_deref())?;
            loss_sum += out.loss * batch.len() as f64;
            let grads = out.grads.blocks();
            opt.step(model.param_blocks_mut(), &grads)?;
        }
        history.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / data.train.len() as f64,
            train_acc: accuracy(model, &data.train, config.batch_size)?,
            test_acc: accuracy(model, &data.test, config.batch_size)?,
        });
    }
    Ok(history)
}
