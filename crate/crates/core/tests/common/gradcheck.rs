//! Central finite-difference checks for every differentiable piece.

use rand::seq::index::sample;
use rand::Rng;
use sdfa::model::{MaskSettings, ModelConfig, Modulation, SdfaModel, SepTcnBlock, SgcnBlock, Tape};
use sdfa::graph::{Normalization, SkeletonGraph};
use sdfa::nn::ops::{self, PoolKind};
use sdfa::nn::mask::sample_mask;
use sdfa::nn::{
    linear_softmax_ce, softmax_cross_entropy, BatchNormState, MaskKind, Mode, ParamTensor, Tensor,
};
use sdfa::{rng_from_seed, SdfaRng};

use super::{check_all, probe, random_tensor, random_vec, rel_error, central_difference};

pub struct Check {
    pub name: String,
    pub worst: f64,
}

fn check(name: impl Into<String>, worst: f64) -> Check {
    Check { name: name.into(), worst }
}

fn p(shape: &[usize], values: &[f64]) -> ParamTensor<f64> {
    ParamTensor::new(shape, values.to_vec())
}

fn with_data(shape: [usize; 4], data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

/// Values bounded away from zero so ReLU and max kinks stay out of reach.
fn away_from_zero(shape: [usize; 4], rng: &mut SdfaRng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Distinct values (a shuffled grid plus jitter), so max pooling has no ties.
fn distinct(shape: [usize; 4], rng: &mut SdfaRng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - n as f64 * 0.025).collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    Tensor::from_vec(shape, vals).unwrap()
}

pub fn conv1x1(rng: &mut SdfaRng) -> Vec<Check> {
    let shape = [1, 2, 3, 4];
    let x = random_tensor(shape, rng);
    let w = random_vec(4, rng);
    let b = random_vec(2, rng);
    let r = random_tensor(shape, rng);
    let g = ops::conv1x1_backward(&x, &p(&[2, 2], &w), true, &r);
    let f = |x: &Tensor<f64>, w: &[f64], b: &[f64]| {
        probe(&ops::conv1x1(x, &p(&[2, 2], w), Some(&p(&[2], b))).unwrap(), &r)
    };
    vec![
        check("conv1x1/input", check_all(x.data(), g.input.data(), |v| f(&with_data(shape, v), &w, &b))),
        check("conv1x1/weight", check_all(&w, &g.weight, |v| f(&x, v, &b))),
        check("conv1x1/bias", check_all(&b, g.bias.as_deref().unwrap(), |v| f(&x, &w, v))),
    ]
}

pub fn relu(rng: &mut SdfaRng) -> Vec<Check> {
    let shape = [2, 2, 3, 3];
    let x = away_from_zero(shape, rng);
    let r = random_tensor(shape, rng);
    let out = ops::relu(&x);
    let g = ops::relu_backward(&out, &r);
    vec![check(
        "relu/input",
        check_all(x.data(), g.data(), |v| probe(&ops::relu(&with_data(shape, v)), &r)),
    )]
}

pub fn graph_aggregate(rng: &mut SdfaRng) -> Vec<Check> {
    let shape = [1, 2, 3, 5];
    let x = random_tensor(shape, rng);
    let a = random_vec(25, rng);
    let r = random_tensor(shape, rng);
    let (gx, ga) = ops::graph_aggregate_backward(&x, &a, &r);
    let f = |x: &Tensor<f64>, a: &[f64]| probe(&ops::graph_aggregate(x, a).unwrap(), &r);
    vec![
        check("graph_aggregate/input", check_all(x.data(), gx.data(), |v| f(&with_data(shape, v), &a))),
        check("graph_aggregate/adjacency", check_all(&a, &ga, |v| f(&x, v))),
    ]
}

pub fn depthwise_and_separable(rng: &mut SdfaRng) -> Vec<Check> {
    let mut out = Vec::new();
    for (k, stride) in [(3, 1), (3, 2), (5, 1), (5, 2)] {
        let (c, cout) = (2, 3);
        let shape = [1, c, 5, 3];
        let x = random_tensor(shape, rng);
        let dw = random_vec(c * k, rng);
        let pw = random_vec(cout * c, rng);
        let t_out = ops::strided_len(5, stride);

        let r_mid = random_tensor([1, c, t_out, 3], rng);
        let (gx, gk) = ops::depthwise_temporal_backward(&x, &p(&[c, k], &dw), stride, &r_mid);
        let f = |x: &Tensor<f64>, dw: &[f64]| probe(&ops::depthwise_temporal(x, &p(&[c, k], dw), stride).unwrap(), &r_mid);
        out.push(check(
            format!("depthwise(k={k},s={stride})/input"),
            check_all(x.data(), gx.data(), |v| f(&with_data(shape, v), &dw)),
        ));
        out.push(check(format!("depthwise(k={k},s={stride})/kernel"), check_all(&dw, &gk, |v| f(&x, v))));

        let r = random_tensor([1, cout, t_out, 3], rng);
        let (_, mid) = ops::sep_temporal_conv(&x, &p(&[c, k], &dw), &p(&[cout, c], &pw), stride).unwrap();
        let g = ops::sep_temporal_conv_backward(&x, &mid, &p(&[c, k], &dw), &p(&[cout, c], &pw), stride, &r);
        let f = |x: &Tensor<f64>, dw: &[f64], pw: &[f64]| {
            probe(&ops::sep_temporal_conv(x, &p(&[c, k], dw), &p(&[cout, c], pw), stride).unwrap().0, &r)
        };
        let name = format!("sep_temporal_conv(k={k},s={stride})");
        out.push(check(
            format!("{name}/input"),
            check_all(x.data(), g.input.data(), |v| f(&with_data(shape, v), &dw, &pw)),
        ));
        out.push(check(format!("{name}/depthwise"), check_all(&dw, &g.depthwise, |v| f(&x, v, &pw))));
        out.push(check(format!("{name}/pointwise"), check_all(&pw, &g.pointwise, |v| f(&x, &dw, v))));
    }
    out
}

pub fn pooling(rng: &mut SdfaRng) -> Vec<Check> {
    let shape = [2, 2, 5, 4];
    let mut out = Vec::new();
    for (kind, stride, name) in [
        (PoolKind::SpatialMax, 1, "spatial_max"),
        (PoolKind::TemporalMax, 1, "temporal_max(s=1)"),
        (PoolKind::TemporalMax, 2, "temporal_max(s=2)"),
        (PoolKind::GlobalAvg, 1, "global_avg"),
    ] {
        let x = distinct(shape, rng);
        let pooled = ops::pool(&x, kind, stride).unwrap();
        let r = random_tensor(pooled.out.shape(), rng);
        let g = ops::pool_backward(shape, kind, pooled.argmax.as_deref(), &r);
        out.push(check(
            format!("{name}/input"),
            check_all(x.data(), g.data(), |v| probe(&ops::pool(&with_data(shape, v), kind, stride).unwrap().out, &r)),
        ));
    }
    let h = random_tensor([1, 2, 3, 4], rng);
    let b = random_tensor([1, 2, 3, 1], rng);
    let r = random_tensor([1, 2, 3, 4], rng);
    let gb = ops::sum_joints(&r);
    out.push(check(
        "joint_broadcast/operand",
        check_all(b.data(), gb.data(), |v| probe(&ops::add_joint_broadcast(&h, &with_data([1, 2, 3, 1], v)).unwrap(), &r)),
    ));
    out
}

pub fn batch_norm(rng: &mut SdfaRng) -> Vec<Check> {
    let shape = [3, 2, 3, 2];
    let x = random_tensor(shape, rng);
    let r = random_tensor(shape, rng);
    let mut bn = BatchNormState::<f64>::new(2);
    bn.gamma.values = random_vec(2, rng);
    bn.beta.values = random_vec(2, rng);
    let (_, cache) = bn.forward(&x, Mode::Train).unwrap();
    let g = bn.backward(&cache, &r);
    let f = |x: &Tensor<f64>, gamma: &[f64], beta: &[f64]| {
        let mut b = bn.clone();
        b.gamma.values = gamma.to_vec();
        b.beta.values = beta.to_vec();
        probe(&b.forward(x, Mode::Train).unwrap().0, &r)
    };
    let (gamma, beta) = (bn.gamma.values.clone(), bn.beta.values.clone());
    vec![
        check("batch_norm/input", check_all(x.data(), g.input.data(), |v| f(&with_data(shape, v), &gamma, &beta))),
        check("batch_norm/gamma", check_all(&gamma, &g.gamma, |v| f(&x, v, &beta))),
        check("batch_norm/beta", check_all(&beta, &g.beta, |v| f(&x, &gamma, v))),
    ]
}

pub fn masking(rng: &mut SdfaRng) -> Vec<Check> {
    let shape = [2, 2, 4, 5];
    let x = random_tensor(shape, rng);
    let r = random_tensor(shape, rng);
    let mask = sample_mask::<f64, _>(shape, MaskKind::Random, 0.3, 0.3, rng).unwrap();
    let g = mask.backward(&r);
    vec![check(
        "mask/input",
        check_all(x.data(), g.data(), |v| probe(&mask.apply(&with_data(shape, v)), &r)),
    )]
}

pub fn losses(rng: &mut SdfaRng) -> Vec<Check> {
    let labels = [1, 0, 2];
    let logits = random_tensor([3, 3, 1, 1], rng);
    let ce = softmax_cross_entropy(&logits, &labels).unwrap();
    let mut out = vec![check(
        "softmax_ce/logits",
        check_all(logits.data(), ce.grad.data(), |v| {
            softmax_cross_entropy(&with_data([3, 3, 1, 1], v), &labels).unwrap().loss
        }),
    )];
    let x = random_tensor([3, 4, 1, 1], rng);
    let w = random_vec(12, rng);
    let b = random_vec(3, rng);
    let g = linear_softmax_ce(&x, &p(&[3, 4], &w), &p(&[3], &b), &labels).unwrap();
    let f = |x: &Tensor<f64>, w: &[f64], b: &[f64]| linear_softmax_ce(x, &p(&[3, 4], w), &p(&[3], b), &labels).unwrap().loss;
    out.push(check("linear_ce/input", check_all(x.data(), g.grad_input.data(), |v| f(&with_data([3, 4, 1, 1], v), &w, &b))));
    out.push(check("linear_ce/weight", check_all(&w, &g.grad_weight, |v| f(&x, v, &b))));
    out.push(check("linear_ce/bias", check_all(&b, &g.grad_bias, |v| f(&x, &w, v))));
    out
}

fn path_graph(v: usize) -> Vec<f64> {
    let edges: Vec<(usize, usize)> = (1..v).map(|i| (i - 1, i)).collect();
    SkeletonGraph::from_edges(v, &edges, Normalization::Row).unwrap().normalized_as()
}

/// Parameter tensors of a graph block, in a fixed order.
fn sgcn_params(b: &mut SgcnBlock<f64>) -> Vec<(&'static str, &mut ParamTensor<f64>)> {
    let mut v: Vec<(&'static str, &mut ParamTensor<f64>)> = vec![("weight", &mut b.weight)];
    if let Some(m) = b.modulation.as_mut() {
        v.push(("modulation", m));
    }
    v.push(("bn.gamma", &mut b.bn.gamma));
    v.push(("bn.beta", &mut b.bn.beta));
    if let Some((w, bias)) = b.projection.as_mut() {
        v.push(("projection.weight", w));
        v.push(("projection.bias", bias));
    }
    v
}

fn septcn_params(b: &mut SepTcnBlock<f64>) -> Vec<(&'static str, &mut ParamTensor<f64>)> {
    vec![
        ("depthwise", &mut b.depthwise),
        ("pointwise", &mut b.pointwise),
        ("bn.gamma", &mut b.bn.gamma),
        ("bn.beta", &mut b.bn.beta),
    ]
}

/// Composed graph blocks in training mode (batch statistics), both
/// modulation forms and with/without projection.
pub fn sgcn_block(rng: &mut SdfaRng) -> Vec<Check> {
    let mut out = Vec::new();
    let v = 5;
    let a_hat = path_graph(v);
    for (cin, cout, kind) in [(2, 3, Modulation::Matrix), (3, 3, Modulation::ScalarGate)] {
        let shape = [2, cin, 3, v];
        let x = distinct(shape, rng);
        let mut block = SgcnBlock::<f64>::new(cin, cout, v, true, kind, rng);
        if let Some(m) = block.modulation.as_mut() {
            m.values.iter_mut().for_each(|m| *m = rng.random_range(0.5..1.5));
        }
        let mut dummy = rng_from_seed(0);
        let (y, cache) = block.forward(&x, &a_hat, Mode::Train, &MaskSettings::OFF, &mut dummy).unwrap();
        let r = random_tensor(y.shape(), rng);
        let gx = block.backward(cache, &a_hat, &r);
        let eval = |b: &SgcnBlock<f64>, x: &Tensor<f64>| {
            let mut dummy = rng_from_seed(0);
            probe(&b.forward(x, &a_hat, Mode::Train, &MaskSettings::OFF, &mut dummy).unwrap().0, &r)
        };
        let name = format!("sgcn({cin}->{cout},{kind:?})");
        out.push(check(format!("{name}/input"), check_all(x.data(), gx.data(), |d| eval(&block, &with_data(shape, d)))));
        let count = sgcn_params(&mut block).len();
        for idx in 0..count {
            let mut probe_block = block.clone();
            let (pname, values, grad) = {
                let mut ps = sgcn_params(&mut probe_block);
                let (n, t) = &mut ps[idx];
                (*n, t.values.clone(), t.grad.clone())
            };
            let worst = check_all(&values, &grad, |vals| {
                sgcn_params(&mut probe_block)[idx].1.values.copy_from_slice(vals);
                eval(&probe_block, &x)
            });
            out.push(check(format!("{name}/{pname}"), worst));
        }
    }
    out
}

pub fn septcn_block(rng: &mut SdfaRng) -> Vec<Check> {
    let mut out = Vec::new();
    for (k, stride) in [(3, 1), (5, 2)] {
        let shape = [2, 3, 5, 2];
        let x = distinct(shape, rng);
        let mut block = SepTcnBlock::<f64>::new(3, k, stride, rng);
        let mut dummy = rng_from_seed(0);
        let (y, cache) = block.forward(&x, Mode::Train, &MaskSettings::OFF, &mut dummy).unwrap();
        let r = random_tensor(y.shape(), rng);
        let gx = block.backward(cache, &r);
        let eval = |b: &SepTcnBlock<f64>, x: &Tensor<f64>| {
            let mut dummy = rng_from_seed(0);
            probe(&b.forward(x, Mode::Train, &MaskSettings::OFF, &mut dummy).unwrap().0, &r)
        };
        let name = format!("septcn(k={k},s={stride})");
        out.push(check(format!("{name}/input"), check_all(x.data(), gx.data(), |d| eval(&block, &with_data(shape, d)))));
        for idx in 0..4 {
            let mut probe_block = block.clone();
            let (pname, values, grad) = {
                let mut ps = septcn_params(&mut probe_block);
                let (n, t) = &mut ps[idx];
                (*n, t.values.clone(), t.grad.clone())
            };
            let worst = check_all(&values, &grad, |vals| {
                septcn_params(&mut probe_block)[idx].1.values.copy_from_slice(vals);
                eval(&probe_block, &x)
            });
            out.push(check(format!("{name}/{pname}"), worst));
        }
    }
    out
}

/// Tiny model used by the end-to-end check: 25 joints, 8 frames, width 4.
pub fn tiny_config() -> ModelConfig {
    ModelConfig { channels: [4, 4, 6], p_joint: 0.1, p_frame: 0.1, ..ModelConfig::default() }
}

/// End-to-end loss gradient against finite differences on `samples`
/// randomly chosen parameter scalars. Masks are replayed from a fixed seed
/// so the loss is a deterministic function of the parameters.
pub fn end_to_end(samples: usize, rng: &mut SdfaRng) -> Check {
    let mut model: SdfaModel<f64> = SdfaModel::new(&tiny_config(), SkeletonGraph::body25(), 3).unwrap();
    let x = random_tensor([2, 3, 8, 25], rng);
    let labels = [0usize, 1];
    let loss = |m: &mut SdfaModel<f64>| {
        let mut tape = Tape::new();
        let logits = m.forward(&x, Mode::Train, &mut rng_from_seed(11), &mut tape).unwrap();
        (softmax_cross_entropy(&logits, &labels).unwrap(), tape)
    };
    model.zero_grad();
    let (ce, mut tape) = loss(&mut model);
    model.backward(&mut tape, &ce.grad).unwrap();

    let sizes: Vec<usize> = model.params().iter().map(|(_, t)| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut worst: f64 = 0.0;
    for flat in sample(rng, total, samples.min(total)).into_iter() {
        let (mut tensor, mut offset) = (0, flat);
        while offset >= sizes[tensor] {
            offset -= sizes[tensor];
            tensor += 1;
        }
        let analytic = model.params()[tensor].1.grad[offset];
        let mut value = [model.params()[tensor].1.values[offset]];
        let numeric = central_difference(&mut value, 0, |v| {
            model.params_mut()[tensor].1.values[offset] = v[0];
            loss(&mut model).0.loss
        });
        model.params_mut()[tensor].1.values[offset] = value[0];
        worst = worst.max(rel_error(analytic, numeric));
    }
    check(format!("end_to_end({samples} params)"), worst)
}

/// Every primitive and composed-block check.
pub fn primitive_suite(seed: u64) -> Vec<Check> {
    let mut rng = rng_from_seed(seed);
    let mut all = Vec::new();
    all.extend(conv1x1(&mut rng));
    all.extend(relu(&mut rng));
    all.extend(graph_aggregate(&mut rng));
    all.extend(depthwise_and_separable(&mut rng));
    all.extend(pooling(&mut rng));
    all.extend(batch_norm(&mut rng));
    all.extend(masking(&mut rng));
    all.extend(losses(&mut rng));
    all.extend(sgcn_block(&mut rng));
    all.extend(septcn_block(&mut rng));
    all
}
