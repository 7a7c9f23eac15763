//! The fall-detection network.
//!
//! Data flow for an input `(N, C, T, V)`:
//!
//! ```text
//! fuse(joint, motion) → sgcn1 → sgcn2 → septcn1 → septcn2 → global avg → linear
//! ```
//!
//! Masking follows each of the four backbone blocks in training mode only.

mod blocks;
pub mod checkpoint;
pub mod complexity;
mod config;

pub use blocks::{
    EncoderCache, FusionCache, FusionLayer, MaskSettings, SepTcnBlock, SepTcnCache, SgcnBlock,
    SgcnCache, StreamEncoder,
};
pub use complexity::{analytic_param_count, count_flops, count_params};
pub use config::{Fusion, Modulation, ModelConfig};

use crate::error::{Error, Result};
use crate::graph::SkeletonGraph;
use crate::nn::batchnorm::Mode;
use crate::nn::ops::{self, PoolKind};
use crate::nn::{BatchNormState, ParamTensor, Scalar, Tensor};
use crate::{rng_from_seed, SdfaRng};

#[derive(Clone, Debug, PartialEq)]
pub struct Head<F> {
    pub weight: ParamTensor<F>,
    pub bias: ParamTensor<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdfaModel<F: Scalar = f32> {
    pub config: ModelConfig,
    pub graph: SkeletonGraph,
    a_hat: Vec<F>,
    pub fusion: FusionLayer<F>,
    pub sgcn: [SgcnBlock<F>; 2],
    pub septcn: [SepTcnBlock<F>; 2],
    pub head: Head<F>,
}

struct ForwardRecord<F> {
    fusion: FusionCache<F>,
    sgcn: Vec<SgcnCache<F>>,
    septcn: Vec<SepTcnCache<F>>,
    pooled: Tensor<F>,
    backbone_shape: [usize; 4],
}

/// Values recorded by [`SdfaModel::forward`] for the backward pass.
pub struct Tape<F> {
    record: Option<ForwardRecord<F>>,
}

impl<F> Default for Tape<F> {
    fn default() -> Self {
        Self { record: None }
    }
}

impl<F> Tape<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_recorded(&self) -> bool {
        self.record.is_some()
    }
}

/// Builds the model over the BODY_25 graph.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<SdfaModel<f32>> {
    SdfaModel::new(config, crate::graph::SkeletonGraph::body25_with(config.adjacency_norm), seed)
}

impl<F: Scalar> SdfaModel<F> {
    /// Deterministic initialization: weights and biases uniform in
    /// `±√(1/fan_in)`, modulation all ones, BN `γ = 1`, `β = 0`.
    pub fn new(config: &ModelConfig, graph: SkeletonGraph, seed: u64) -> Result<Self> {
        config.validate()?;
        if graph.normalization != config.adjacency_norm {
            return Err(Error::Config(format!(
                "graph normalized as {:?}, config asks for {:?}",
                graph.normalization, config.adjacency_norm
            )));
        }
        let mut rng = rng_from_seed(seed);
        let [c1, c2, c3] = config.channels;
        let cin = config.in_channels;
        let v = graph.num_joints;
        let joint = matches!(config.fusion, Fusion::Joint | Fusion::EarlyFused)
            .then(|| StreamEncoder::new(cin, c1, &mut rng));
        let motion = matches!(config.fusion, Fusion::Motion | Fusion::EarlyFused)
            .then(|| StreamEncoder::new(cin, c1, &mut rng));
        let learn = config.use_learnable_adjacency;
        let sgcn = [
            SgcnBlock::new(c1, c2, v, learn, config.modulation, &mut rng),
            SgcnBlock::new(c2, c3, v, learn, config.modulation, &mut rng),
        ];
        let septcn = [
            SepTcnBlock::new(c3, config.tcn_kernels[0], config.tcn_strides[0], &mut rng),
            SepTcnBlock::new(c3, config.tcn_kernels[1], config.tcn_strides[1], &mut rng),
        ];
        let head = Head {
            weight: blocks::uniform_param(&[config.num_classes, c3], c3, &mut rng),
            bias: blocks::uniform_param(&[config.num_classes], c3, &mut rng),
        };
        Ok(Self {
            config: config.clone(),
            a_hat: graph.normalized_as(),
            graph,
            fusion: FusionLayer { joint, motion },
            sgcn,
            septcn,
            head,
        })
    }

    pub fn normalized_adjacency(&self) -> &[F] {
        &self.a_hat
    }

    pub fn mask_settings(&self) -> MaskSettings {
        MaskSettings {
            kind: self.config.mask,
            p_joint: self.config.p_joint,
            p_frame: self.config.p_frame,
        }
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        let [_, c, t, v] = x.shape();
        if c != self.config.in_channels || v != self.graph.num_joints {
            return Err(Error::Shape(format!(
                "model expects (N, {}, T, {}) input, got {:?}",
                self.config.in_channels,
                self.graph.num_joints,
                x.shape()
            )));
        }
        if t < 2 {
            return Err(Error::SequenceTooShort(format!("input has {t} frames")));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor<F>, mode: Mode, rng: &mut SdfaRng) -> Result<(Tensor<F>, ForwardRecord<F>)> {
        self.check_input(x)?;
        let mask = self.mask_settings();
        let (mut h, fusion) = self.fusion.forward(x, mode)?;
        let mut sgcn = Vec::with_capacity(2);
        for block in &self.sgcn {
            let (out, cache) = block.forward(&h, &self.a_hat, mode, &mask, rng)?;
            sgcn.push(cache);
            h = out;
        }
        let mut septcn = Vec::with_capacity(2);
        for block in &self.septcn {
            let (out, cache) = block.forward(&h, mode, &mask, rng)?;
            septcn.push(cache);
            h = out;
        }
        let backbone_shape = h.shape();
        let pooled = ops::pool(&h, PoolKind::GlobalAvg, 1)?.out;
        let logits = crate::nn::linear(&pooled, &self.head.weight, &self.head.bias)?;
        Ok((
            logits,
            ForwardRecord {
                fusion,
                sgcn,
                septcn,
                pooled,
                backbone_shape,
            },
        ))
    }

    /// Forward pass recording everything backward needs. In training mode
    /// masking is active, BN uses batch statistics and running statistics
    /// are updated.
    ///
    /// Returns logits shaped `(N, num_classes, 1, 1)`.
    pub fn forward(
        &mut self,
        x: &Tensor<F>,
        mode: Mode,
        rng: &mut SdfaRng,
        tape: &mut Tape<F>,
    ) -> Result<Tensor<F>> {
        let (logits, record) = self.run(x, mode, rng)?;
        if mode == Mode::Train {
            for (bn, cache) in self.batch_norms_mut().into_iter().zip(record.bn_caches()) {
                bn.update_running(cache);
            }
        }
        tape.record = Some(record);
        Ok(logits)
    }

    /// Deterministic evaluation-mode forward pass. Nothing is recorded for
    /// backward, so intermediate activations are dropped as soon as possible.
    pub fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(x)?;
        let (mut h, _) = self.fusion.forward(x, Mode::Eval)?;
        for block in &self.sgcn {
            h = block.forward_eval(&h, &self.a_hat)?;
        }
        for block in &self.septcn {
            h = block.forward_eval(&h)?;
        }
        let pooled = ops::pool(&h, PoolKind::GlobalAvg, 1)?.out;
        crate::nn::linear(&pooled, &self.head.weight, &self.head.bias)
    }

    /// Softmax probability of class 1 (fall) per sample.
    pub fn fall_probabilities(&self, x: &Tensor<F>) -> Result<Vec<f64>> {
        let logits = self.infer(x)?;
        Ok(probabilities(&logits).into_iter().map(|p| p[1]).collect())
    }

    /// Accumulates parameter gradients given `d loss / d logits`.
    pub fn backward(&mut self, tape: &mut Tape<F>, grad_logits: &Tensor<F>) -> Result<()> {
        let record = tape.record.take().ok_or_else(|| {
            Error::Usage("backward called without a recorded forward pass".into())
        })?;
        if grad_logits.shape() != [record.pooled.shape()[0], self.config.num_classes, 1, 1] {
            return Err(Error::Shape(format!(
                "gradient {:?} does not match logits",
                grad_logits.shape()
            )));
        }
        let gh = ops::conv1x1_backward(&record.pooled, &self.head.weight, true, grad_logits);
        self.head.weight.accumulate(&gh.weight);
        self.head.bias.accumulate(gh.bias.as_deref().expect("bias grad"));
        let mut g = ops::pool_backward(record.backbone_shape, PoolKind::GlobalAvg, None, &gh.input);
        for (block, cache) in self.septcn.iter_mut().zip(record.septcn).rev() {
            g = block.backward(cache, &g);
        }
        for (block, cache) in self.sgcn.iter_mut().zip(record.sgcn).rev() {
            g = block.backward(cache, &self.a_hat, &g);
        }
        self.fusion.backward(&record.fusion, &g);
        Ok(())
    }

    /// Every learnable tensor with a stable dotted name.
    pub fn params(&self) -> Vec<(String, &ParamTensor<F>)> {
        let mut out = Vec::new();
        self.fusion.params(&mut out);
        for (i, b) in self.sgcn.iter().enumerate() {
            b.params(&format!("sgcn{}", i + 1), &mut out);
        }
        for (i, b) in self.septcn.iter().enumerate() {
            b.params(&format!("septcn{}", i + 1), &mut out);
        }
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut ParamTensor<F>)> {
        let mut out = Vec::new();
        self.fusion.params_mut(&mut out);
        for (i, b) in self.sgcn.iter_mut().enumerate() {
            b.params_mut(&format!("sgcn{}", i + 1), &mut out);
        }
        for (i, b) in self.septcn.iter_mut().enumerate() {
            b.params_mut(&format!("septcn{}", i + 1), &mut out);
        }
        out.push(("head.weight".into(), &mut self.head.weight));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Batch-norm layers in forward order, with their dotted prefix.
    pub fn batch_norms(&self) -> Vec<(String, &BatchNormState<F>)> {
        let mut out: Vec<(String, &BatchNormState<F>)> =
            self.fusion.encoders().map(|(n, e)| (n.to_string(), &e.bn)).collect();
        out.extend(self.sgcn.iter().enumerate().map(|(i, b)| (format!("sgcn{}", i + 1), &b.bn)));
        out.extend(self.septcn.iter().enumerate().map(|(i, b)| (format!("septcn{}", i + 1), &b.bn)));
        out
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNormState<F>> {
        let mut out: Vec<&mut BatchNormState<F>> =
            self.fusion.encoders_mut().map(|(_, e)| &mut e.bn).collect();
        out.extend(self.sgcn.iter_mut().map(|b| &mut b.bn));
        out.extend(self.septcn.iter_mut().map(|b| &mut b.bn));
        out
    }

    /// Same model in another precision (gradient checks run in `f64`).
    pub fn cast<G: Scalar>(&self) -> SdfaModel<G> {
        let bn = |b: &BatchNormState<F>| BatchNormState {
            gamma: b.gamma.cast(),
            beta: b.beta.cast(),
            running_mean: b.running_mean.iter().map(|v| G::from_f64(v.as_f64())).collect(),
            running_var: b.running_var.iter().map(|v| G::from_f64(v.as_f64())).collect(),
            momentum: G::from_f64(b.momentum.as_f64()),
            epsilon: G::from_f64(b.epsilon.as_f64()),
        };
        let enc = |e: &StreamEncoder<F>| StreamEncoder {
            bn: bn(&e.bn),
            weight: e.weight.cast(),
            bias: e.bias.cast(),
        };
        let sgcn = |b: &SgcnBlock<F>| SgcnBlock {
            weight: b.weight.cast(),
            modulation: b.modulation.as_ref().map(ParamTensor::cast),
            modulation_kind: b.modulation_kind,
            bn: bn(&b.bn),
            projection: b.projection.as_ref().map(|(w, c)| (w.cast(), c.cast())),
        };
        let tcn = |b: &SepTcnBlock<F>| SepTcnBlock {
            depthwise: b.depthwise.cast(),
            pointwise: b.pointwise.cast(),
            bn: bn(&b.bn),
            stride: b.stride,
        };
        SdfaModel {
            config: self.config.clone(),
            graph: self.graph.clone(),
            a_hat: self.graph.normalized_as(),
            fusion: FusionLayer {
                joint: self.fusion.joint.as_ref().map(enc),
                motion: self.fusion.motion.as_ref().map(enc),
            },
            sgcn: [sgcn(&self.sgcn[0]), sgcn(&self.sgcn[1])],
            septcn: [tcn(&self.septcn[0]), tcn(&self.septcn[1])],
            head: Head {
                weight: self.head.weight.cast(),
                bias: self.head.bias.cast(),
            },
        }
    }
}

impl<F: Scalar> ForwardRecord<F> {
    fn bn_caches(&self) -> Vec<&crate::nn::BnCache<F>> {
        let mut out = Vec::new();
        out.extend(self.fusion.bn_caches());
        out.extend(self.sgcn.iter().map(|c| c.bn_cache()));
        out.extend(self.septcn.iter().map(|c| c.bn_cache()));
        out
    }
}

/// Row-wise softmax of `(N, K, 1, 1)` logits, in `f64`.
pub fn probabilities<F: Scalar>(logits: &Tensor<F>) -> Vec<Vec<f64>> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks_exact(k)
        .map(|row| {
            let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}
