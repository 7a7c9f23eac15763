//! Building blocks of the network, each with forward and backward.

use crate::error::{Error, Result};
use crate::graph::effective_adjacency;
use crate::model::config::Modulation;
use crate::nn::batchnorm::{BnCache, Mode};
use crate::nn::mask::{masked, Mask, MaskKind};
use crate::nn::ops::{self, PoolKind};
use crate::nn::{BatchNormState, ParamTensor, Scalar, Tensor};
use crate::skeleton::motion_stream;
use crate::SdfaRng;

/// Masking settings shared by all backbone blocks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskSettings {
    pub kind: MaskKind,
    pub p_joint: f64,
    pub p_frame: f64,
}

impl MaskSettings {
    pub const OFF: MaskSettings = MaskSettings {
        kind: MaskKind::None,
        p_joint: 0.0,
        p_frame: 0.0,
    };

    fn apply<F: Scalar>(
        &self,
        x: Tensor<F>,
        mode: Mode,
        rng: &mut SdfaRng,
    ) -> Result<(Tensor<F>, Option<Mask<F>>)> {
        if mode == Mode::Eval || self.kind == MaskKind::None {
            return Ok((x, None));
        }
        masked(&x, self.kind, self.p_joint, self.p_frame, true, rng)
    }
}

pub(crate) fn uniform_param<F: Scalar>(shape: &[usize], fan_in: usize, rng: &mut SdfaRng) -> ParamTensor<F> {
    use rand::Rng;
    let bound = (1.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let values = (0..n)
        .map(|_| F::from_f64(rng.random_range(-bound..=bound)))
        .collect();
    ParamTensor::new(shape, values)
}

pub(crate) fn push_bn<'a, F>(prefix: &str, bn: &'a BatchNormState<F>, out: &mut Vec<(String, &'a ParamTensor<F>)>) {
    out.push((format!("{prefix}.bn.gamma"), &bn.gamma));
    out.push((format!("{prefix}.bn.beta"), &bn.beta));
}

pub(crate) fn push_bn_mut<'a, F>(
    prefix: &str,
    bn: &'a mut BatchNormState<F>,
    out: &mut Vec<(String, &'a mut ParamTensor<F>)>,
) {
    out.push((format!("{prefix}.bn.gamma"), &mut bn.gamma));
    out.push((format!("{prefix}.bn.beta"), &mut bn.beta));
}

fn apply_bn_grads<F: Scalar>(bn: &mut BatchNormState<F>, cache: &BnCache<F>, g: &Tensor<F>) -> Tensor<F> {
    let grads = bn.backward(cache, g);
    bn.gamma.accumulate(&grads.gamma);
    bn.beta.accumulate(&grads.beta);
    grads.input
}

// ---------------------------------------------------------------------------

/// BN followed by a 1×1 projection of one input stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamEncoder<F> {
    pub bn: BatchNormState<F>,
    pub weight: ParamTensor<F>,
    pub bias: ParamTensor<F>,
}

pub struct EncoderCache<F> {
    bn: BnCache<F>,
    normed: Tensor<F>,
}

impl<F: Scalar> StreamEncoder<F> {
    pub fn new(cin: usize, cout: usize, rng: &mut SdfaRng) -> Self {
        Self {
            bn: BatchNormState::new(cin),
            weight: uniform_param(&[cout, cin], cin, rng),
            bias: uniform_param(&[cout], cin, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, EncoderCache<F>)> {
        let (normed, bn) = self.bn.forward(x, mode)?;
        let out = ops::conv1x1(&normed, &self.weight, Some(&self.bias))?;
        Ok((out, EncoderCache { bn, normed }))
    }

    pub fn backward(&mut self, cache: &EncoderCache<F>, grad: &Tensor<F>) {
        let g = ops::conv1x1_backward(&cache.normed, &self.weight, true, grad);
        self.weight.accumulate(&g.weight);
        self.bias.accumulate(g.bias.as_deref().expect("bias grad"));
        apply_bn_grads(&mut self.bn, &cache.bn, &g.input);
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a ParamTensor<F>)>) {
        push_bn(prefix, &self.bn, out);
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut ParamTensor<F>)>) {
        push_bn_mut(prefix, &mut self.bn, out);
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}

/// Early fusion of the joint stream and its motion stream.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionLayer<F> {
    pub joint: Option<StreamEncoder<F>>,
    pub motion: Option<StreamEncoder<F>>,
}

pub struct FusionCache<F> {
    joint: Option<EncoderCache<F>>,
    motion: Option<EncoderCache<F>>,
}

impl<F> FusionCache<F> {
    pub(crate) fn bn_caches(&self) -> impl Iterator<Item = &BnCache<F>> {
        [self.joint.as_ref(), self.motion.as_ref()].into_iter().flatten().map(|c| &c.bn)
    }
}

impl<F: Scalar> FusionLayer<F> {
    /// `conv1x1(BN(x)) + conv1x1(BN(motion(x)))`, with either branch optional.
    pub fn forward(&self, x: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, FusionCache<F>)> {
        let joint = self.joint.as_ref().map(|e| e.forward(x, mode)).transpose()?;
        let motion = match &self.motion {
            Some(e) => Some(e.forward(&motion_stream(x)?, mode)?),
            None => None,
        };
        let out = match (&joint, &motion) {
            (Some((a, _)), Some((b, _))) => a.add(b)?,
            (Some((a, _)), None) | (None, Some((a, _))) => a.clone(),
            (None, None) => return Err(Error::Internal("fusion layer without streams".into())),
        };
        Ok((
            out,
            FusionCache {
                joint: joint.map(|(_, c)| c),
                motion: motion.map(|(_, c)| c),
            },
        ))
    }

    pub fn backward(&mut self, cache: &FusionCache<F>, grad: &Tensor<F>) {
        if let (Some(e), Some(c)) = (self.joint.as_mut(), cache.joint.as_ref()) {
            e.backward(c, grad);
        }
        if let (Some(e), Some(c)) = (self.motion.as_mut(), cache.motion.as_ref()) {
            e.backward(c, grad);
        }
    }

    pub(crate) fn encoders(&self) -> impl Iterator<Item = (&'static str, &StreamEncoder<F>)> {
        [("joint_encoder", self.joint.as_ref()), ("motion_encoder", self.motion.as_ref())]
            .into_iter()
            .filter_map(|(n, e)| e.map(|e| (n, e)))
    }

    pub(crate) fn encoders_mut(&mut self) -> impl Iterator<Item = (&'static str, &mut StreamEncoder<F>)> {
        [("joint_encoder", self.joint.as_mut()), ("motion_encoder", self.motion.as_mut())]
            .into_iter()
            .filter_map(|(n, e)| e.map(|e| (n, e)))
    }

    pub(crate) fn params<'a>(&'a self, out: &mut Vec<(String, &'a ParamTensor<F>)>) {
        for (name, e) in self.encoders() {
            e.params(name, out);
        }
    }

    pub(crate) fn params_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut ParamTensor<F>)>) {
        for (name, e) in self.encoders_mut() {
            e.params_mut(name, out);
        }
    }
}

// ---------------------------------------------------------------------------

/// Spatial graph convolution with learnable adjacency modulation and a
/// spatial-max-pool residual:
/// `relu(BN((Â⊙M)·_V (x·_C W)) + broadcast(spatial_max(project(x))))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SgcnBlock<F> {
    pub weight: ParamTensor<F>,
    /// `None` when the adjacency is frozen.
    pub modulation: Option<ParamTensor<F>>,
    pub modulation_kind: Modulation,
    pub bn: BatchNormState<F>,
    /// 1×1 projection on the residual path when widths differ.
    pub projection: Option<(ParamTensor<F>, ParamTensor<F>)>,
}

pub struct SgcnCache<F> {
    input: Tensor<F>,
    transformed: Tensor<F>,
    adjacency: Vec<F>,
    bn: BnCache<F>,
    residual_in_shape: [usize; 4],
    argmax: Vec<usize>,
    activated: Tensor<F>,
    mask: Option<Mask<F>>,
}

impl<F> SgcnCache<F> {
    pub(crate) fn bn_cache(&self) -> &BnCache<F> {
        &self.bn
    }
}

impl<F: Scalar> SgcnBlock<F> {
    pub fn new(
        cin: usize,
        cout: usize,
        joints: usize,
        learnable: bool,
        kind: Modulation,
        rng: &mut SdfaRng,
    ) -> Self {
        let weight = uniform_param(&[cout, cin], cin, rng);
        let projection = (cin != cout)
            .then(|| (uniform_param(&[cout, cin], cin, rng), uniform_param(&[cout], cin, rng)));
        let modulation = learnable.then(|| match kind {
            Modulation::Matrix => ParamTensor::filled(&[joints, joints], F::one()),
            Modulation::ScalarGate => ParamTensor::filled(&[1], F::one()),
        });
        Self {
            weight,
            modulation,
            modulation_kind: kind,
            bn: BatchNormState::new(cout),
            projection,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }

    /// Adjacency actually used by the aggregation.
    pub fn effective_adjacency(&self, a_hat: &[F]) -> Result<Vec<F>> {
        match &self.modulation {
            None => Ok(a_hat.to_vec()),
            Some(m) if self.modulation_kind == Modulation::ScalarGate => {
                Ok(a_hat.iter().map(|&a| a * m.values[0]).collect())
            }
            Some(m) => effective_adjacency(a_hat, &m.values),
        }
    }

    pub fn forward(
        &self,
        x: &Tensor<F>,
        a_hat: &[F],
        mode: Mode,
        mask: &MaskSettings,
        rng: &mut SdfaRng,
    ) -> Result<(Tensor<F>, SgcnCache<F>)> {
        let v = x.shape()[3];
        if v * v != a_hat.len() {
            return Err(Error::Shape(format!(
                "graph block expects {} joints, input has {v}",
                (a_hat.len() as f64).sqrt() as usize
            )));
        }
        let adjacency = self.effective_adjacency(a_hat)?;
        let transformed = ops::conv1x1(x, &self.weight, None)?;
        let h = ops::graph_aggregate(&transformed, &adjacency)?;
        let (hn, bn) = self.bn.forward(&h, mode)?;
        let residual_in = match &self.projection {
            Some((w, b)) => ops::conv1x1(x, w, Some(b))?,
            None => x.clone(),
        };
        let pooled = ops::pool(&residual_in, PoolKind::SpatialMax, 1)?;
        let activated = ops::relu(&ops::add_joint_broadcast(&hn, &pooled.out)?);
        let (out, mask) = mask.apply(activated.clone(), mode, rng)?;
        Ok((
            out,
            SgcnCache {
                input: x.clone(),
                transformed,
                adjacency,
                bn,
                residual_in_shape: residual_in.shape(),
                argmax: pooled.argmax.expect("max pooling argmax"),
                activated,
                mask,
            },
        ))
    }

    /// Evaluation-mode forward without caches.
    pub fn forward_eval(&self, x: &Tensor<F>, a_hat: &[F]) -> Result<Tensor<F>> {
        let v = x.shape()[3];
        if v * v != a_hat.len() {
            return Err(Error::Shape(format!(
                "graph block expects {} joints, input has {v}",
                (a_hat.len() as f64).sqrt() as usize
            )));
        }
        let adjacency = self.effective_adjacency(a_hat)?;
        let mut h = ops::graph_aggregate(&ops::conv1x1(x, &self.weight, None)?, &adjacency)?;
        let projected = match &self.projection {
            Some((w, b)) => Some(ops::conv1x1(x, w, Some(b))?),
            None => None,
        };
        // spatial max of each (n, c, t) row of the channel-matched input
        let source = projected.as_ref().unwrap_or(x);
        let maxima: Vec<F> = source
            .data()
            .chunks_exact(v)
            .map(|row| row[1..].iter().fold(row[0], |a, &b| if b > a { b } else { a }))
            .collect();
        let [_, c, t, _] = source.shape();
        self.bn.eval_add_relu(&mut h, |i, ch, tt, row| {
            let r = maxima[(i * c + ch) * t + tt];
            row.iter_mut().for_each(|y| *y += r);
        });
        Ok(h)
    }

    pub fn backward(&mut self, cache: SgcnCache<F>, a_hat: &[F], grad: &Tensor<F>) -> Tensor<F> {
        let g = match &cache.mask {
            Some(m) => m.backward(grad),
            None => grad.clone(),
        };
        let g = ops::relu_backward(&cache.activated, &g);
        let g_res = ops::sum_joints(&g);
        let g_h = apply_bn_grads(&mut self.bn, &cache.bn, &g);
        let (g_u, g_adj) = ops::graph_aggregate_backward(&cache.transformed, &cache.adjacency, &g_h);
        if let Some(m) = self.modulation.as_mut() {
            match self.modulation_kind {
                Modulation::Matrix => {
                    let gm: Vec<F> = g_adj.iter().zip(a_hat).map(|(&g, &a)| g * a).collect();
                    m.accumulate(&gm);
                }
                Modulation::ScalarGate => {
                    let s = g_adj.iter().zip(a_hat).map(|(&g, &a)| g * a).sum::<F>();
                    m.accumulate(&[s]);
                }
            }
        }
        let gw = ops::conv1x1_backward(&cache.input, &self.weight, false, &g_u);
        self.weight.accumulate(&gw.weight);
        let mut gx = gw.input;
        let g_pool = ops::pool_backward(cache.residual_in_shape, PoolKind::SpatialMax, Some(&cache.argmax), &g_res);
        match self.projection.as_mut() {
            Some((w, b)) => {
                let gp = ops::conv1x1_backward(&cache.input, w, true, &g_pool);
                w.accumulate(&gp.weight);
                b.accumulate(gp.bias.as_deref().expect("bias grad"));
                gx.add_assign(&gp.input).expect("same shape");
            }
            None => gx.add_assign(&g_pool).expect("same shape"),
        }
        gx
    }

    pub(crate) fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a ParamTensor<F>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        if let Some(m) = &self.modulation {
            out.push((format!("{prefix}.modulation"), m));
        }
        push_bn(prefix, &self.bn, out);
        if let Some((w, b)) = &self.projection {
            out.push((format!("{prefix}.projection.weight"), w));
            out.push((format!("{prefix}.projection.bias"), b));
        }
    }

    pub(crate) fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut ParamTensor<F>)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        if let Some(m) = self.modulation.as_mut() {
            out.push((format!("{prefix}.modulation"), m));
        }
        push_bn_mut(prefix, &mut self.bn, out);
        if let Some((w, b)) = self.projection.as_mut() {
            out.push((format!("{prefix}.projection.weight"), w));
            out.push((format!("{prefix}.projection.bias"), b));
        }
    }
}

// ---------------------------------------------------------------------------

/// Separable temporal convolution with a temporal-max-pool residual:
/// `relu(BN(pw(dw(x))) + temporal_max(x, stride))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SepTcnBlock<F> {
    pub depthwise: ParamTensor<F>,
    pub pointwise: ParamTensor<F>,
    pub bn: BatchNormState<F>,
    pub stride: usize,
}

pub struct SepTcnCache<F> {
    input: Tensor<F>,
    mid: Tensor<F>,
    bn: BnCache<F>,
    argmax: Vec<usize>,
    activated: Tensor<F>,
    mask: Option<Mask<F>>,
}

impl<F> SepTcnCache<F> {
    pub(crate) fn bn_cache(&self) -> &BnCache<F> {
        &self.bn
    }
}

impl<F: Scalar> SepTcnBlock<F> {
    pub fn new(channels: usize, kernel: usize, stride: usize, rng: &mut SdfaRng) -> Self {
        Self {
            depthwise: uniform_param(&[channels, kernel], kernel, rng),
            pointwise: uniform_param(&[channels, channels], channels, rng),
            bn: BatchNormState::new(channels),
            stride,
        }
    }

    pub fn forward(
        &self,
        x: &Tensor<F>,
        mode: Mode,
        mask: &MaskSettings,
        rng: &mut SdfaRng,
    ) -> Result<(Tensor<F>, SepTcnCache<F>)> {
        let (h, mid) = ops::sep_temporal_conv(x, &self.depthwise, &self.pointwise, self.stride)?;
        let (hn, bn) = self.bn.forward(&h, mode)?;
        let pooled = ops::pool(x, PoolKind::TemporalMax, self.stride)?;
        let activated = ops::relu(&hn.add(&pooled.out)?);
        let (out, mask) = mask.apply(activated.clone(), mode, rng)?;
        Ok((
            out,
            SepTcnCache {
                input: x.clone(),
                mid,
                bn,
                argmax: pooled.argmax.expect("max pooling argmax"),
                activated,
                mask,
            },
        ))
    }

    /// Evaluation-mode forward without caches.
    pub fn forward_eval(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let mut h = ops::sep_temporal_conv(x, &self.depthwise, &self.pointwise, self.stride)?.0;
        let [_, c, t, v] = x.shape();
        let stride = self.stride;
        self.bn.eval_add_relu(&mut h, |i, ch, to, row| {
            // temporal max over the window [to·s, to·s + s) of the input
            let base = (i * c + ch) * t;
            let (start, end) = (to * stride, (to * stride + stride).min(t));
            let (first, rest) = x.data()[(base + start) * v..(base + end) * v].split_at(v);
            for (j, y) in row.iter_mut().enumerate() {
                let mut best = first[j];
                for frame in rest.chunks_exact(v) {
                    if frame[j] > best {
                        best = frame[j];
                    }
                }
                *y += best;
            }
        });
        Ok(h)
    }

    pub fn backward(&mut self, cache: SepTcnCache<F>, grad: &Tensor<F>) -> Tensor<F> {
        let g = match &cache.mask {
            Some(m) => m.backward(grad),
            None => grad.clone(),
        };
        let g = ops::relu_backward(&cache.activated, &g);
        let g_h = apply_bn_grads(&mut self.bn, &cache.bn, &g);
        let sg = ops::sep_temporal_conv_backward(
            &cache.input,
            &cache.mid,
            &self.depthwise,
            &self.pointwise,
            self.stride,
            &g_h,
        );
        self.depthwise.accumulate(&sg.depthwise);
        self.pointwise.accumulate(&sg.pointwise);
        let mut gx = sg.input;
        let g_pool = ops::pool_backward(cache.input.shape(), PoolKind::TemporalMax, Some(&cache.argmax), &g);
        gx.add_assign(&g_pool).expect("same shape");
        gx
    }

    pub(crate) fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a ParamTensor<F>)>) {
        out.push((format!("{prefix}.depthwise"), &self.depthwise));
        out.push((format!("{prefix}.pointwise"), &self.pointwise));
        push_bn(prefix, &self.bn, out);
    }

    pub(crate) fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut ParamTensor<F>)>) {
        out.push((format!("{prefix}.depthwise"), &mut self.depthwise));
        out.push((format!("{prefix}.pointwise"), &mut self.pointwise));
        push_bn_mut(prefix, &mut self.bn, out);
    }
}
