//! Analytic parameter and multiply-accumulate counts.

use super::{Fusion, ModelConfig, Modulation, SdfaModel};
use crate::nn::ops::strided_len;
use crate::nn::Scalar;

/// Number of learnable scalars, enumerated from the model's tensors.
pub fn count_params<F: Scalar>(model: &SdfaModel<F>) -> usize {
    model.params().iter().map(|(_, p)| p.len()).sum()
}

/// Parameter count derived from the configuration alone.
pub fn analytic_param_count(config: &ModelConfig, joints: usize) -> usize {
    let [c1, c2, c3] = config.channels;
    let cin = config.in_channels;
    let streams = match config.fusion {
        Fusion::EarlyFused => 2,
        Fusion::Joint | Fusion::Motion => 1,
    };
    let encoder = 2 * cin + c1 * cin + c1;
    let modulation = match (config.use_learnable_adjacency, config.modulation) {
        (false, _) => 0,
        (true, Modulation::Matrix) => joints * joints,
        (true, Modulation::ScalarGate) => 1,
    };
    let sgcn = |a: usize, b: usize| {
        let proj = if a != b { a * b + b } else { 0 };
        b * a + modulation + 2 * b + proj
    };
    let tcn = |k: usize| c3 * k + c3 * c3 + 2 * c3;
    streams * encoder
        + sgcn(c1, c2)
        + sgcn(c2, c3)
        + tcn(config.tcn_kernels[0])
        + tcn(config.tcn_kernels[1])
        + config.num_classes * c3
        + config.num_classes
}

/// Multiply-accumulates per layer for one sample of shape `(C, T, V)`.
pub fn flops_breakdown(config: &ModelConfig, input: [usize; 3]) -> Vec<(String, u64)> {
    let [cin, t, v] = input.map(|d| d as u64);
    let [c1, c2, c3] = config.channels.map(|c| c as u64);
    let mut out = Vec::new();
    let streams: &[&str] = match config.fusion {
        Fusion::EarlyFused => &["joint_encoder", "motion_encoder"],
        Fusion::Joint => &["joint_encoder"],
        Fusion::Motion => &["motion_encoder"],
    };
    for s in streams {
        out.push((format!("{s}.conv"), c1 * cin * t * v));
    }
    for (i, (a, b)) in [(c1, c2), (c2, c3)].into_iter().enumerate() {
        let p = format!("sgcn{}", i + 1);
        out.push((format!("{p}.conv"), b * a * t * v));
        out.push((format!("{p}.adjacency"), v * v * b * t));
        if a != b {
            out.push((format!("{p}.projection"), b * a * t * v));
        }
    }
    let mut tt = t;
    for i in 0..2 {
        let k = config.tcn_kernels[i] as u64;
        tt = strided_len(tt as usize, config.tcn_strides[i]) as u64;
        let p = format!("septcn{}", i + 1);
        out.push((format!("{p}.depthwise"), c3 * k * tt * v));
        out.push((format!("{p}.pointwise"), c3 * c3 * tt * v));
    }
    out.push(("head".into(), config.num_classes as u64 * c3));
    out
}

/// Total multiply-accumulates for one sample of shape `(C, T, V)`.
pub fn count_flops<F: Scalar>(model: &SdfaModel<F>, input: [usize; 3]) -> u64 {
    flops_breakdown(&model.config, input).iter().map(|(_, m)| m).sum()
}
