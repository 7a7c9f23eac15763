//! Layer primitives over `(N, C, T, V)` tensors.
//!
//! Each forward function has a matching `*_backward` that maps the gradient
//! of the output back to the inputs and parameters. Backward functions
//! return gradients; accumulating them into [`ParamTensor::grad`] is left to
//! the caller.

use crate::error::{Error, Result};
use crate::nn::{ParamTensor, Scalar, Tensor};

fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

fn check_param(p: &ParamTensor<impl Scalar>, shape: &[usize], what: &str) -> Result<()> {
    if p.shape != shape {
        return Err(shape_err(format!(
            "{what}: expected parameter shape {shape:?}, got {:?}",
            p.shape
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 1×1 convolution

pub struct Conv1x1Grads<F> {
    pub input: Tensor<F>,
    pub weight: Vec<F>,
    pub bias: Option<Vec<F>>,
}

/// `out[n,co,t,v] = Σ_ci W[co,ci]·x[n,ci,t,v] + b[co]`, with `W` shaped `(Cout, Cin)`.
pub fn conv1x1<F: Scalar>(
    x: &Tensor<F>,
    weight: &ParamTensor<F>,
    bias: Option<&ParamTensor<F>>,
) -> Result<Tensor<F>> {
    let [n, cin, t, v] = x.shape();
    if weight.shape.len() != 2 || weight.shape[1] != cin {
        return Err(shape_err(format!(
            "conv1x1: weight {:?} does not accept {cin} input channels",
            weight.shape
        )));
    }
    let cout = weight.shape[0];
    if let Some(b) = bias {
        check_param(b, &[cout], "conv1x1 bias")?;
    }
    let plane = t * v;
    let mut out = Tensor::zeros([n, cout, t, v]);
    for i in 0..n {
        let dst = out.sample_mut(i);
        if let Some(b) = bias {
            for (co, row) in dst.chunks_exact_mut(plane).enumerate() {
                row.iter_mut().for_each(|o| *o = b.values[co]);
            }
        }
        F::gemm(
            cout,
            cin,
            plane,
            F::one(),
            &weight.values,
            cin as isize,
            1,
            x.sample(i),
            plane as isize,
            1,
            F::one(),
            dst,
            plane as isize,
            1,
        );
    }
    Ok(out)
}

pub fn conv1x1_backward<F: Scalar>(
    x: &Tensor<F>,
    weight: &ParamTensor<F>,
    with_bias: bool,
    grad_out: &Tensor<F>,
) -> Conv1x1Grads<F> {
    let [n, cin, t, v] = x.shape();
    let cout = weight.shape[0];
    let plane = t * v;
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = vec![F::zero(); cout * cin];
    let mut gb = with_bias.then(|| vec![F::zero(); cout]);
    for i in 0..n {
        let g = grad_out.sample(i);
        // gx = Wᵀ·g
        F::gemm(
            cin,
            cout,
            plane,
            F::one(),
            &weight.values,
            1,
            cin as isize,
            g,
            plane as isize,
            1,
            F::zero(),
            gx.sample_mut(i),
            plane as isize,
            1,
        );
        // gW += g·xᵀ
        F::gemm(
            cout,
            plane,
            cin,
            F::one(),
            g,
            plane as isize,
            1,
            x.sample(i),
            1,
            plane as isize,
            F::one(),
            &mut gw,
            cin as isize,
            1,
        );
        if let Some(gb) = gb.as_mut() {
            for (co, row) in g.chunks_exact(plane).enumerate() {
                gb[co] += row.iter().copied().sum::<F>();
            }
        }
    }
    Conv1x1Grads {
        input: gx,
        weight: gw,
        bias: gb,
    }
}

// ---------------------------------------------------------------------------
// ReLU

pub fn relu<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    x.map(|a| a.max(F::zero()))
}

/// Backward of [`relu`], given the forward *output*.
pub fn relu_backward<F: Scalar>(out: &Tensor<F>, grad_out: &Tensor<F>) -> Tensor<F> {
    let data = out
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&o, &g)| if o > F::zero() { g } else { F::zero() })
        .collect();
    Tensor::from_vec(out.shape(), data).expect("relu backward preserves shape")
}

// ---------------------------------------------------------------------------
// Graph aggregation over the joint axis

/// `out[n,c,t,i] = Σ_j A[i,j]·x[n,c,t,j]` with `A` a row-major `V×V` matrix.
pub fn graph_aggregate<F: Scalar>(x: &Tensor<F>, adjacency: &[F]) -> Result<Tensor<F>> {
    let [n, c, t, v] = x.shape();
    if adjacency.len() != v * v {
        return Err(shape_err(format!(
            "graph_aggregate: adjacency has {} entries, input has {v} joints",
            adjacency.len()
        )));
    }
    let rows = n * c * t;
    let mut out = Tensor::zeros(x.shape());
    F::gemm(
        rows,
        v,
        v,
        F::one(),
        x.data(),
        v as isize,
        1,
        adjacency,
        1,
        v as isize,
        F::zero(),
        out.data_mut(),
        v as isize,
        1,
    );
    Ok(out)
}

/// Returns `(grad_x, grad_adjacency)`.
pub fn graph_aggregate_backward<F: Scalar>(
    x: &Tensor<F>,
    adjacency: &[F],
    grad_out: &Tensor<F>,
) -> (Tensor<F>, Vec<F>) {
    let [n, c, t, v] = x.shape();
    let rows = n * c * t;
    let mut gx = Tensor::zeros(x.shape());
    F::gemm(
        rows,
        v,
        v,
        F::one(),
        grad_out.data(),
        v as isize,
        1,
        adjacency,
        v as isize,
        1,
        F::zero(),
        gx.data_mut(),
        v as isize,
        1,
    );
    let mut ga = vec![F::zero(); v * v];
    F::gemm(
        v,
        rows,
        v,
        F::one(),
        grad_out.data(),
        1,
        v as isize,
        x.data(),
        v as isize,
        1,
        F::zero(),
        &mut ga,
        v as isize,
        1,
    );
    (gx, ga)
}

// ---------------------------------------------------------------------------
// Depthwise-separable temporal convolution

/// Output length of a temporal convolution with "same" padding.
pub fn strided_len(t: usize, stride: usize) -> usize {
    t.div_ceil(stride)
}

fn check_temporal(kernel: usize, stride: usize) -> Result<()> {
    if kernel % 2 == 0 {
        return Err(Error::Config(format!("temporal kernel must be odd, got {kernel}")));
    }
    if !(1..=2).contains(&stride) {
        return Err(Error::Config(format!("temporal stride must be 1 or 2, got {stride}")));
    }
    Ok(())
}

/// Per-channel temporal convolution with a `(C, K)` kernel, zero padding
/// `K/2` on both sides and spatial kernel size 1.
pub fn depthwise_temporal<F: Scalar>(
    x: &Tensor<F>,
    kernel: &ParamTensor<F>,
    stride: usize,
) -> Result<Tensor<F>> {
    let [n, c, t, v] = x.shape();
    if kernel.shape.len() != 2 || kernel.shape[0] != c {
        return Err(shape_err(format!(
            "depthwise: kernel {:?} does not match {c} channels",
            kernel.shape
        )));
    }
    let k = kernel.shape[1];
    check_temporal(k, stride)?;
    let pad = (k / 2) as isize;
    let t_out = strided_len(t, stride);
    let mut out = Tensor::zeros([n, c, t_out, v]);
    for i in 0..n {
        for ch in 0..c {
            let w = &kernel.values[ch * k..(ch + 1) * k];
            let src_base = x.index(i, ch, 0, 0);
            let dst_base = out.index(i, ch, 0, 0);
            for to in 0..t_out {
                let dst = dst_base + to * v;
                for (tap, &wk) in w.iter().enumerate() {
                    let ti = (to * stride) as isize + tap as isize - pad;
                    if ti < 0 || ti >= t as isize {
                        continue;
                    }
                    let src = src_base + ti as usize * v;
                    let (xs, os) = (&x.data()[src..src + v], &mut out.data_mut()[dst..dst + v]);
                    for (o, &xv) in os.iter_mut().zip(xs) {
                        *o += wk * xv;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(grad_x, grad_kernel)`.
pub fn depthwise_temporal_backward<F: Scalar>(
    x: &Tensor<F>,
    kernel: &ParamTensor<F>,
    stride: usize,
    grad_out: &Tensor<F>,
) -> (Tensor<F>, Vec<F>) {
    let [n, c, t, v] = x.shape();
    let k = kernel.shape[1];
    let pad = (k / 2) as isize;
    let t_out = grad_out.shape()[2];
    let mut gx = Tensor::zeros(x.shape());
    let mut gk = vec![F::zero(); c * k];
    for i in 0..n {
        for ch in 0..c {
            let src_base = x.index(i, ch, 0, 0);
            let g_base = grad_out.index(i, ch, 0, 0);
            for to in 0..t_out {
                let g = &grad_out.data()[g_base + to * v..g_base + (to + 1) * v];
                for tap in 0..k {
                    let ti = (to * stride) as isize + tap as isize - pad;
                    if ti < 0 || ti >= t as isize {
                        continue;
                    }
                    let src = src_base + ti as usize * v;
                    let wk = kernel.values[ch * k + tap];
                    let mut acc = F::zero();
                    for (j, &gv) in g.iter().enumerate() {
                        acc += gv * x.data()[src + j];
                        gx.data_mut()[src + j] += wk * gv;
                    }
                    gk[ch * k + tap] += acc;
                }
            }
        }
    }
    (gx, gk)
}

pub struct SepConvGrads<F> {
    pub input: Tensor<F>,
    pub depthwise: Vec<F>,
    pub pointwise: Vec<F>,
}

/// Depthwise temporal filter followed by a bias-free pointwise channel mix.
/// Returns the output and the intermediate depthwise result (needed for backward).
pub fn sep_temporal_conv<F: Scalar>(
    x: &Tensor<F>,
    depthwise: &ParamTensor<F>,
    pointwise: &ParamTensor<F>,
    stride: usize,
) -> Result<(Tensor<F>, Tensor<F>)> {
    let mid = depthwise_temporal(x, depthwise, stride)?;
    let out = conv1x1(&mid, pointwise, None)?;
    Ok((out, mid))
}

pub fn sep_temporal_conv_backward<F: Scalar>(
    x: &Tensor<F>,
    mid: &Tensor<F>,
    depthwise: &ParamTensor<F>,
    pointwise: &ParamTensor<F>,
    stride: usize,
    grad_out: &Tensor<F>,
) -> SepConvGrads<F> {
    let pw = conv1x1_backward(mid, pointwise, false, grad_out);
    let (gx, gdw) = depthwise_temporal_backward(x, depthwise, stride, &pw.input);
    SepConvGrads {
        input: gx,
        depthwise: gdw,
        pointwise: pw.weight,
    }
}

// ---------------------------------------------------------------------------
// Pooling

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    /// Max over joints, `V → 1`.
    SpatialMax,
    /// Max over non-overlapping temporal windows of length `stride`.
    TemporalMax,
    /// Mean over frames and joints, `(T, V) → (1, 1)`.
    GlobalAvg,
}

pub struct Pooled<F> {
    pub out: Tensor<F>,
    /// Flat input index chosen for every output element (max kinds only).
    pub argmax: Option<Vec<usize>>,
}

pub fn pool<F: Scalar>(x: &Tensor<F>, kind: PoolKind, stride: usize) -> Result<Pooled<F>> {
    let [n, c, t, v] = x.shape();
    match kind {
        PoolKind::SpatialMax => {
            let mut out = Tensor::zeros([n, c, t, 1]);
            let mut arg = Vec::with_capacity(n * c * t);
            for (r, row) in x.data().chunks_exact(v).enumerate() {
                let mut best = 0;
                for j in 1..v {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                out.data_mut()[r] = row[best];
                arg.push(r * v + best);
            }
            Ok(Pooled {
                out,
                argmax: Some(arg),
            })
        }
        PoolKind::TemporalMax => {
            if stride == 0 {
                return Err(Error::Config("temporal pooling stride must be ≥ 1".into()));
            }
            let t_out = strided_len(t, stride);
            let mut out = Tensor::zeros([n, c, t_out, v]);
            let mut arg = vec![0; n * c * t_out * v];
            for i in 0..n {
                for ch in 0..c {
                    for to in 0..t_out {
                        let start = to * stride;
                        let end = (start + stride).min(t);
                        for j in 0..v {
                            let mut best = x.index(i, ch, start, j);
                            for ti in start + 1..end {
                                let idx = x.index(i, ch, ti, j);
                                if x.data()[idx] > x.data()[best] {
                                    best = idx;
                                }
                            }
                            let o = out.index(i, ch, to, j);
                            out.data_mut()[o] = x.data()[best];
                            arg[o] = best;
                        }
                    }
                }
            }
            Ok(Pooled {
                out,
                argmax: Some(arg),
            })
        }
        PoolKind::GlobalAvg => {
            let plane = t * v;
            let inv = F::one() / F::from_f64(plane as f64);
            let data = x
                .data()
                .chunks_exact(plane)
                .map(|p| p.iter().copied().sum::<F>() * inv)
                .collect();
            Ok(Pooled {
                out: Tensor::from_vec([n, c, 1, 1], data)?,
                argmax: None,
            })
        }
    }
}

pub fn pool_backward<F: Scalar>(
    input_shape: [usize; 4],
    kind: PoolKind,
    argmax: Option<&[usize]>,
    grad_out: &Tensor<F>,
) -> Tensor<F> {
    let mut gx = Tensor::zeros(input_shape);
    match kind {
        PoolKind::SpatialMax | PoolKind::TemporalMax => {
            let arg = argmax.expect("max pooling backward needs argmax indices");
            for (&src, &g) in arg.iter().zip(grad_out.data()) {
                gx.data_mut()[src] += g;
            }
        }
        PoolKind::GlobalAvg => {
            let plane = input_shape[2] * input_shape[3];
            let inv = F::one() / F::from_f64(plane as f64);
            for (dst, &g) in gx.data_mut().chunks_exact_mut(plane).zip(grad_out.data()) {
                dst.iter_mut().for_each(|d| *d = g * inv);
            }
        }
    }
    gx
}

/// `out[n,c,t,v] = h[n,c,t,v] + r[n,c,t,0]`.
pub fn add_joint_broadcast<F: Scalar>(h: &Tensor<F>, r: &Tensor<F>) -> Result<Tensor<F>> {
    let [n, c, t, v] = h.shape();
    if r.shape() != [n, c, t, 1] {
        return Err(shape_err(format!(
            "cannot broadcast {:?} over joints of {:?}",
            r.shape(),
            h.shape()
        )));
    }
    let mut out = h.clone();
    for (row, &b) in out.data_mut().chunks_exact_mut(v).zip(r.data()) {
        row.iter_mut().for_each(|x| *x += b);
    }
    Ok(out)
}

/// Gradient of the broadcast operand: sum over joints.
pub fn sum_joints<F: Scalar>(g: &Tensor<F>) -> Tensor<F> {
    let [n, c, t, v] = g.shape();
    let data = g.data().chunks_exact(v).map(|r| r.iter().copied().sum()).collect();
    Tensor::from_vec([n, c, t, 1], data).expect("sum_joints shape")
}
