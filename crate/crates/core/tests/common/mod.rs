//! Shared oracles and finite-difference helpers for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use sdfa::nn::Tensor;
use sdfa::SdfaRng;

pub mod gradcheck;

pub fn random_tensor(shape: [usize; 4], rng: &mut SdfaRng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

pub fn random_vec(n: usize, rng: &mut SdfaRng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `|a − b| / max(|a|, |b|, floor)`; the floor keeps exact zeros comparable.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub const FD_STEP: f64 = 1e-4;

/// Central difference of `loss` with respect to `values[i]`.
pub fn central_difference(values: &mut [f64], i: usize, mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = values[i];
    values[i] = orig + FD_STEP;
    let up = loss(values);
    values[i] = orig - FD_STEP;
    let down = loss(values);
    values[i] = orig;
    (up - down) / (2.0 * FD_STEP)
}

/// Worst relative error over every coordinate of `values`.
pub fn check_all(values: &[f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(values.len(), analytic.len());
    let mut v = values.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..v.len() {
        let numeric = central_difference(&mut v, i, &mut loss);
        worst = worst.max(rel_error(analytic[i], numeric));
    }
    worst
}

/// `Σ r ⊙ y`: a scalar probe whose gradient with respect to `y` is `r`.
pub fn probe(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Row-normalized adjacency with self loops, built directly from an edge list.
pub fn row_normalized(v: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut neighbours: Vec<Vec<usize>> = (0..v).map(|i| vec![i]).collect();
    for &(a, b) in edges {
        if !neighbours[a].contains(&b) {
            neighbours[a].push(b);
        }
        if !neighbours[b].contains(&a) {
            neighbours[b].push(a);
        }
    }
    let mut a_hat = vec![vec![0.0; v]; v];
    for (i, nb) in neighbours.iter().enumerate() {
        for &j in nb {
            a_hat[i][j] = 1.0 / nb.len() as f64;
        }
    }
    a_hat
}

/// Random spanning tree on `v` joints.
pub fn random_tree(v: usize, rng: &mut SdfaRng) -> Vec<(usize, usize)> {
    (1..v).map(|i| (rng.random_range(0..i), i)).collect()
}

pub struct SgcnOracleParams<'a> {
    pub weight: &'a [f64],
    pub modulation: &'a [f64],
    pub gamma: &'a [f64],
    pub beta: &'a [f64],
    pub running_mean: &'a [f64],
    pub running_var: &'a [f64],
    pub epsilon: f64,
    pub projection: Option<(&'a [f64], &'a [f64])>,
}

/// Evaluation-mode graph block written one joint at a time:
/// `f1(v_tj) = W·x_tj`, `f_out(v_ti) = Σ_{j ∈ B(i)} Â_ij M_ij f1(v_tj)`,
/// then BN, plus the spatial max of the (projected) input, then ReLU.
pub fn sgcn_oracle(
    x: &Tensor<f64>,
    a_hat: &[Vec<f64>],
    cout: usize,
    p: &SgcnOracleParams,
) -> Tensor<f64> {
    let [n, cin, t, v] = x.shape();
    let mut out = Tensor::zeros([n, cout, t, v]);
    for s in 0..n {
        for tt in 0..t {
            // f1 for every joint of this frame
            let mut f1 = vec![vec![0.0; cout]; v];
            for (j, f) in f1.iter_mut().enumerate() {
                for (co, fc) in f.iter_mut().enumerate() {
                    for ci in 0..cin {
                        *fc += p.weight[co * cin + ci] * x.at(s, ci, tt, j);
                    }
                }
            }
            // residual: max over joints of the channel-matched input
            let mut residual = vec![f64::NEG_INFINITY; cout];
            for j in 0..v {
                for (co, r) in residual.iter_mut().enumerate() {
                    let value = match p.projection {
                        Some((w, b)) => b[co] + (0..cin).map(|ci| w[co * cin + ci] * x.at(s, ci, tt, j)).sum::<f64>(),
                        None => x.at(s, co, tt, j),
                    };
                    *r = r.max(value);
                }
            }
            for i in 0..v {
                for co in 0..cout {
                    let mut acc = 0.0;
                    for j in 0..v {
                        if a_hat[i][j] != 0.0 {
                            acc += a_hat[i][j] * p.modulation[i * v + j] * f1[j][co];
                        }
                    }
                    let bn = p.gamma[co] * (acc - p.running_mean[co]) / (p.running_var[co] + p.epsilon).sqrt()
                        + p.beta[co];
                    out.set(s, co, tt, i, (bn + residual[co]).max(0.0));
                }
            }
        }
    }
    out
}

/// Depthwise temporal filter then channel mix, one output element at a time.
pub fn sep_conv_oracle(
    x: &Tensor<f64>,
    depthwise: &[f64],
    k: usize,
    pointwise: &[f64],
    cout: usize,
    stride: usize,
) -> Tensor<f64> {
    let [n, c, t, v] = x.shape();
    let t_out = t.div_ceil(stride);
    let pad = (k / 2) as i64;
    let mut mid = Tensor::<f64>::zeros([n, c, t_out, v]);
    for s in 0..n {
        for ch in 0..c {
            for to in 0..t_out {
                for tap in 0..k {
                    let ti = (to * stride) as i64 + tap as i64 - pad;
                    if ti < 0 || ti >= t as i64 {
                        continue;
                    }
                    for j in 0..v {
                        let cur = mid.at(s, ch, to, j);
                        mid.set(s, ch, to, j, cur + depthwise[ch * k + tap] * x.at(s, ch, ti as usize, j));
                    }
                }
            }
        }
    }
    let mut out = Tensor::zeros([n, cout, t_out, v]);
    for s in 0..n {
        for co in 0..cout {
            for to in 0..t_out {
                for j in 0..v {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        acc += pointwise[co * c + ci] * mid.at(s, ci, to, j);
                    }
                    out.set(s, co, to, j, acc);
                }
            }
        }
    }
    out
}

/// Max over non-overlapping windows of `stride` frames.
pub fn temporal_max_oracle(x: &Tensor<f64>, stride: usize) -> Tensor<f64> {
    let [n, c, t, v] = x.shape();
    let t_out = t.div_ceil(stride);
    Tensor::from_fn([n, c, t_out, v], |[s, ch, to, j]| {
        (to * stride..((to + 1) * stride).min(t))
            .map(|ti| x.at(s, ch, ti, j))
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Largest deviation between the library graph block and [`sgcn_oracle`]
/// over `cases` random instances with V ∈ {3, 5, 25}, T ≤ 4 and C ≤ 4.
pub fn sgcn_oracle_max_diff(cases: usize, seed: u64) -> f64 {
    use sdfa::graph::{Normalization, SkeletonGraph};
    use sdfa::model::{MaskSettings, Modulation, SgcnBlock};
    use sdfa::nn::Mode;

    let mut rng = sdfa::rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let v = [3, 5, 25][case % 3];
        let (n, t) = (rng.random_range(1..=2), rng.random_range(1..=4));
        let (cin, cout) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let edges = random_tree(v, &mut rng);
        let graph = SkeletonGraph::from_edges(v, &edges, Normalization::Row).unwrap();
        let mut block = SgcnBlock::<f64>::new(cin, cout, v, true, Modulation::Matrix, &mut rng);
        block.weight.values = random_vec(cout * cin, &mut rng);
        let modulation: Vec<f64> = (0..v * v).map(|_| rng.random_range(0.0..2.0)).collect();
        block.modulation.as_mut().unwrap().values = modulation.clone();
        block.bn.gamma.values = random_vec(cout, &mut rng);
        block.bn.beta.values = random_vec(cout, &mut rng);
        block.bn.running_mean = random_vec(cout, &mut rng);
        block.bn.running_var = (0..cout).map(|_| rng.random_range(0.5..2.0)).collect();
        let x = random_tensor([n, cin, t, v], &mut rng);

        let (got, _) = block
            .forward(&x, &graph.normalized_as(), Mode::Eval, &MaskSettings::OFF, &mut rng)
            .unwrap();
        let projection = block.projection.as_ref().map(|(w, b)| (&w.values[..], &b.values[..]));
        let want = sgcn_oracle(
            &x,
            &row_normalized(v, &edges),
            cout,
            &SgcnOracleParams {
                weight: &block.weight.values,
                modulation: &modulation,
                gamma: &block.bn.gamma.values,
                beta: &block.bn.beta.values,
                running_mean: &block.bn.running_mean,
                running_var: &block.bn.running_var,
                epsilon: block.bn.epsilon,
                projection,
            },
        );
        worst = worst.max(got.max_abs_diff(&want));
    }
    worst
}

/// Largest deviation between `sep_temporal_conv` and [`sep_conv_oracle`]
/// over `cases` random instances cycling through both kernels and strides.
pub fn sep_conv_oracle_max_diff(cases: usize, seed: u64) -> f64 {
    use sdfa::nn::ops::sep_temporal_conv;
    use sdfa::nn::ParamTensor;

    let mut rng = sdfa::rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let (k, stride) = [(3, 1), (3, 2), (5, 1), (5, 2)][case % 4];
        let shape = [
            rng.random_range(1..=2),
            rng.random_range(1..=4),
            rng.random_range(1..=9),
            rng.random_range(1..=5),
        ];
        let (c, cout) = (shape[1], rng.random_range(1..=4));
        let x = random_tensor(shape, &mut rng);
        let dw = random_vec(c * k, &mut rng);
        let pw = random_vec(cout * c, &mut rng);
        let (got, _) = sep_temporal_conv(
            &x,
            &ParamTensor::new(&[c, k], dw.clone()),
            &ParamTensor::new(&[cout, c], pw.clone()),
            stride,
        )
        .unwrap();
        worst = worst.max(got.max_abs_diff(&sep_conv_oracle(&x, &dw, k, &pw, cout, stride)));
    }
    worst
}
