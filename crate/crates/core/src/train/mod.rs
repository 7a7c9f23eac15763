//! Training loop, evaluation splits and the binary metric suite.

pub mod metrics;
pub mod report;
pub mod split;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, roc_auc, MetricsReport};
pub use report::{history_table, results_table, ResultRecord};
pub use split::{cross_fall_folds, make_split, Protocol, Split, SplitSpec};

use crate::error::{Error, Result};
use crate::model::{probabilities, SdfaModel, Tape};
use crate::nn::batchnorm::Mode;
use crate::nn::{softmax_cross_entropy, FeatureTensor, ParamTensor, Scalar};
use crate::skeleton::{to_feature_tensor_with, InputChannels, PreprocessConfig, SkeletonSequence};
use crate::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Multiplier applied every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            momentum: 0.9,
            epochs: 50,
            decay_factor: 0.9,
            decay_every: 10,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::Config("epochs, batch_size and decay_every must be ≥ 1".into()));
        }
        if !(self.decay_factor > 0.0) {
            return Err(Error::Config("decay_factor must be positive".into()));
        }
        Ok(())
    }
}

/// Step schedule: `lr0 · decay_factor^⌊epoch / decay_every⌋`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.decay_factor.powi((epoch / cfg.decay_every) as i32)
}

/// Classic momentum: `v ← μ·v + g`, `p ← p − lr·v`.
pub fn sgd_step<F: Scalar>(params: &mut [F], grads: &[F], velocity: &mut [F], lr: F, momentum: F) {
    assert!(params.len() == grads.len() && grads.len() == velocity.len());
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

fn step_param<F: Scalar>(p: &mut ParamTensor<F>, lr: F, momentum: F) {
    let ParamTensor { values, grad, velocity, .. } = p;
    sgd_step(values, grad, velocity, lr, momentum);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
}

/// Preprocessed sequences stacked into one tensor, with labels.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub x: FeatureTensor,
    pub labels: Vec<usize>,
}

impl PreparedData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn prepare(
    dataset: &[SkeletonSequence],
    preprocess: &PreprocessConfig,
    channels: InputChannels,
) -> Result<PreparedData> {
    let seqs = dataset
        .iter()
        .enumerate()
        .map(|(i, s)| {
            preprocess
                .apply(s)
                .map_err(|e| Error::Data(format!("sequence {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedData {
        x: to_feature_tensor_with(&seqs, channels)?,
        labels: seqs.iter().map(SkeletonSequence::label).collect(),
    })
}

/// Mini-batch SGD over `train_idx`, reshuffled every epoch from `cfg.seed`.
pub fn fit(
    model: &mut SdfaModel<f32>,
    data: &PreparedData,
    train_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    fit_with(model, data, train_idx, cfg, |_| {})
}

/// As [`fit`], calling `on_epoch` after each epoch.
pub fn fit_with(
    model: &mut SdfaModel<f32>,
    data: &PreparedData,
    train_idx: &[usize],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(Error::Training("empty training split".into()));
    }
    if let Some(&i) = train_idx.iter().find(|&&i| i >= data.len()) {
        return Err(Error::Training(format!("training index {i} out of range")));
    }
    let mut order_rng = rng_from_seed(cfg.seed);
    let mut mask_rng = rng_from_seed(cfg.seed ^ 0x6d61_736b);
    let mut order = train_idx.to_vec();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut tape = Tape::new();
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let x = data.x.select_batch(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            model.zero_grad();
            let logits = model.forward(&x, Mode::Train, &mut mask_rng, &mut tape)?;
            let ce = softmax_cross_entropy(&logits, &labels)?;
            if !ce.loss.is_finite() {
                return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
            }
            model.backward(&mut tape, &ce.grad)?;
            for (_, p) in model.params_mut() {
                step_param(p, lr as f32, cfg.momentum as f32);
            }
            loss_sum += ce.loss as f64 * batch.len() as f64;
            correct += ce
                .probs
                .iter()
                .zip(&labels)
                .filter(|(p, &l)| argmax(p) == l)
                .count();
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / order.len() as f64,
            train_acc: correct as f64 / order.len() as f64,
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok(history)
}

fn argmax<F: PartialOrd>(v: &[F]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Preprocesses `dataset`, then trains on the split's training indices.
pub fn train(
    model: &mut SdfaModel<f32>,
    dataset: &[SkeletonSequence],
    split: &Split,
    cfg: &TrainConfig,
    preprocess: &PreprocessConfig,
) -> Result<Vec<EpochRecord>> {
    let channels = match model.config.in_channels {
        2 => InputChannels::Xy,
        _ => InputChannels::XyConfidence,
    };
    let data = prepare(dataset, preprocess, channels)?;
    fit(model, &data, &split.train, cfg)
}

/// Fall-class probabilities for `indices`, evaluated in batches.
pub fn predict(model: &SdfaModel<f32>, data: &PreparedData, indices: &[usize]) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(32) {
        let logits = model.infer(&data.x.select_batch(chunk))?;
        scores.extend(probabilities(&logits).into_iter().map(|p| p[1]));
    }
    Ok(scores)
}

/// Metrics on the test indices at threshold 0.5.
pub fn evaluate(model: &SdfaModel<f32>, data: &PreparedData, test_idx: &[usize]) -> Result<MetricsReport> {
    let scores = predict(model, data, test_idx)?;
    let labels: Vec<u8> = test_idx.iter().map(|&i| data.labels[i] as u8).collect();
    compute_metrics(&scores, &labels, 0.5)
}
