use serde::{Deserialize, Serialize};

use super::SkeletonSequence;
use crate::error::{Error, Result};
use crate::graph::joint;

/// Cleaning and canonicalization applied before sequences reach the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// 300 for most datasets; long recordings (UP-Fall style) use 1145.
    pub target_len: usize,
    pub view_invariant: bool,
    pub normalize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_len: 300,
            view_invariant: true,
            normalize: true,
        }
    }
}

impl PreprocessConfig {
    /// Empty-frame removal, length restriction, view-invariant transform and
    /// normalization, in that order.
    pub fn apply(&self, seq: &SkeletonSequence) -> Result<SkeletonSequence> {
        let mut s = remove_empty_frames(seq)?;
        s = pad_to_length(&s, self.target_len)?;
        if self.view_invariant {
            s = view_invariant_transform(&s);
        }
        if self.normalize {
            s = normalize_sequence(&s);
        }
        Ok(s)
    }
}

pub fn remove_empty_frames(seq: &SkeletonSequence) -> Result<SkeletonSequence> {
    let frames: Vec<_> = seq.frames.iter().filter(|f| !f.is_empty()).copied().collect();
    if frames.is_empty() {
        return Err(Error::EmptySequence(format!(
            "all {} frames are empty",
            seq.frames.len()
        )));
    }
    Ok(SkeletonSequence {
        frames,
        ..seq.clone()
    })
}

/// Resamples to exactly `target` frames: cyclic repetition when short,
/// uniform subsampling at `round(i·len/target)` when long.
pub fn pad_to_length(seq: &SkeletonSequence, target: usize) -> Result<SkeletonSequence> {
    if target == 0 {
        return Err(Error::Config("target length must be ≥ 1".into()));
    }
    let len = seq.frames.len();
    if len == 0 {
        return Err(Error::EmptySequence("cannot pad an empty sequence".into()));
    }
    let frames = if len == target {
        seq.frames.clone()
    } else if len < target {
        (0..target).map(|i| seq.frames[i % len]).collect()
    } else {
        (0..target)
            .map(|i| {
                // round half up, in integers
                let idx = (2 * i * len + target) / (2 * target);
                seq.frames[idx.min(len - 1)]
            })
            .collect()
    };
    Ok(SkeletonSequence {
        frames,
        ..seq.clone()
    })
}

/// Translates the skeleton so the MidHip of the first frame where it was
/// detected sits at the origin. The same offset is used for every frame so
/// global motion (e.g. the drop of a fall) is preserved.
pub fn view_invariant_transform(seq: &SkeletonSequence) -> SkeletonSequence {
    let reference = seq
        .frames
        .iter()
        .map(|f| f.joints[joint::MID_HIP])
        .find(|j| j.confidence > 0.0);
    let Some(r) = reference else {
        return SkeletonSequence {
            view_transform_skipped: true,
            ..seq.clone()
        };
    };
    SkeletonSequence {
        frames: seq.frames.iter().map(|f| f.translated(-r.x, -r.y)).collect(),
        view_transform_skipped: false,
        ..seq.clone()
    }
}

/// Zero mean, unit variance per coordinate channel over all frames and
/// joints. Channels with std below 1e-6 are only centered.
pub fn normalize_sequence(seq: &SkeletonSequence) -> SkeletonSequence {
    let n = (seq.frames.len() * seq.frames.first().map_or(0, |f| f.joints.len())) as f64;
    if n == 0.0 {
        return seq.clone();
    }
    let stats = |get: fn(&super::Joint2D) -> f32| {
        let vals = seq.frames.iter().flat_map(|f| f.joints.iter().map(get));
        let mean = vals.clone().map(f64::from).sum::<f64>() / n;
        let var = vals.map(|v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (mx, sx) = stats(|j| j.x);
    let (my, sy) = stats(|j| j.y);
    let scale = |s: f64| if s < 1e-6 { 1.0 } else { 1.0 / s };
    let (kx, ky) = (scale(sx), scale(sy));
    let mut out = seq.clone();
    for f in out.frames.iter_mut() {
        for j in f.joints.iter_mut() {
            j.x = ((f64::from(j.x) - mx) * kx) as f32;
            j.y = ((f64::from(j.y) - my) * ky) as f32;
        }
    }
    out
}
