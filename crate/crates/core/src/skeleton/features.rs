use serde::{Deserialize, Serialize};

use super::SkeletonSequence;
use crate::error::{Error, Result};
use crate::graph::BODY25_JOINTS;
use crate::nn::{FeatureTensor, Scalar, Tensor};

/// Which per-joint values become input channels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputChannels {
    /// `(x, y, confidence)`
    #[default]
    XyConfidence,
    /// `(x, y)`
    Xy,
}

impl InputChannels {
    pub fn count(self) -> usize {
        match self {
            InputChannels::XyConfidence => 3,
            InputChannels::Xy => 2,
        }
    }
}

/// Stacks equal-length sequences into an `(N, 3, T, 25)` tensor with
/// channels `(x, y, confidence)`.
pub fn to_feature_tensor(batch: &[SkeletonSequence]) -> Result<FeatureTensor> {
    to_feature_tensor_with(batch, InputChannels::XyConfidence)
}

pub fn to_feature_tensor_with(
    batch: &[SkeletonSequence],
    channels: InputChannels,
) -> Result<FeatureTensor> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Batch("empty batch".into()))?;
    let t = first.frames.len();
    if let Some((i, s)) = batch.iter().enumerate().find(|(_, s)| s.frames.len() != t) {
        return Err(Error::Batch(format!(
            "sequence {i} has {} frames, sequence 0 has {t}",
            s.frames.len()
        )));
    }
    let c = channels.count();
    let mut out = Tensor::zeros([batch.len(), c, t, BODY25_JOINTS]);
    for (n, s) in batch.iter().enumerate() {
        for (ti, f) in s.frames.iter().enumerate() {
            for (v, j) in f.joints.iter().enumerate() {
                out.set(n, 0, ti, v, j.x);
                out.set(n, 1, ti, v, j.y);
                if c == 3 {
                    out.set(n, 2, ti, v, j.confidence);
                }
            }
        }
    }
    Ok(out)
}

/// Forward temporal difference `x[t+1] − x[t]`; the last frame is zero.
pub fn motion_stream<F: Scalar>(x: &Tensor<F>) -> Result<Tensor<F>> {
    let [n, c, t, v] = x.shape();
    if t < 2 {
        return Err(Error::SequenceTooShort(format!(
            "motion needs at least 2 frames, got {t}"
        )));
    }
    let mut out = Tensor::zeros(x.shape());
    for i in 0..n {
        for ch in 0..c {
            let base = x.index(i, ch, 0, 0);
            for ti in 0..t - 1 {
                let (cur, next) = (base + ti * v, base + (ti + 1) * v);
                for j in 0..v {
                    out.data_mut()[cur + j] = x.data()[next + j] - x.data()[cur + j];
                }
            }
        }
    }
    Ok(out)
}
