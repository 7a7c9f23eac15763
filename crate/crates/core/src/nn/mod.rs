//! Differentiable numerical kernels.

pub mod batchnorm;
pub mod loss;
pub mod mask;
pub mod ops;
mod param;
mod scalar;
mod tensor;

pub use batchnorm::{BatchNormState, BnCache, Mode};
pub use loss::{linear, linear_softmax_ce, softmax_cross_entropy};
pub use mask::{random_st_mask, Mask, MaskKind};
pub use ops::{
    conv1x1, depthwise_temporal, graph_aggregate, pool, relu, sep_temporal_conv, PoolKind,
};
pub use param::ParamTensor;
pub use scalar::Scalar;
pub use tensor::{FeatureTensor, Tensor};
