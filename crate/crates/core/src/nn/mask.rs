//! Randomized spatio-temporal masking of feature maps.
//!
//! During training every joint index and every frame index of a sample is
//! zeroed independently, across all channels. Survivors are rescaled by the
//! inverse keep probability so the expected activation is unchanged and
//! evaluation needs no correction. In evaluation mode the input passes
//! through untouched.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MaskKind {
    /// Independent joints and independent (disjoint) frames.
    Random,
    /// Contiguous runs of `block` frames, in the style of temporal DropGraph.
    TemporalBlock { block: usize },
    None,
}

/// Multiplier per `(n, t, v)`, broadcast over channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask<F> {
    pub shape: [usize; 3],
    pub values: Vec<F>,
}

impl<F: Scalar> Mask<F> {
    pub fn apply(&self, x: &Tensor<F>) -> Tensor<F> {
        let [n, c, t, v] = x.shape();
        assert_eq!(self.shape, [n, t, v], "mask shape");
        let mut out = x.clone();
        let plane = t * v;
        for i in 0..n {
            let m = &self.values[i * plane..(i + 1) * plane];
            for ch in 0..c {
                let base = out.index(i, ch, 0, 0);
                for (o, &mv) in out.data_mut()[base..base + plane].iter_mut().zip(m) {
                    *o *= mv;
                }
            }
        }
        out
    }

    /// The mask is linear, so backward applies the same multipliers.
    pub fn backward(&self, grad_out: &Tensor<F>) -> Tensor<F> {
        self.apply(grad_out)
    }
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("{what} must lie in [0, 1), got {p}")));
    }
    Ok(())
}

/// Draws a mask for a tensor of shape `(n, _, t, v)`.
pub fn sample_mask<F: Scalar, R: Rng + ?Sized>(
    shape: [usize; 4],
    kind: MaskKind,
    p_joint: f64,
    p_frame: f64,
    rng: &mut R,
) -> Result<Mask<F>> {
    check_prob(p_joint, "joint mask probability")?;
    check_prob(p_frame, "frame mask probability")?;
    let [n, _, t, v] = shape;
    let mut values = Vec::with_capacity(n * t * v);
    let mut keep_joint = vec![true; v];
    let mut keep_frame = vec![true; t];
    for _ in 0..n {
        keep_joint.iter_mut().for_each(|k| *k = !rng.random_bool(p_joint));
        let scale = match kind {
            MaskKind::None => {
                keep_joint.iter_mut().for_each(|k| *k = true);
                keep_frame.iter_mut().for_each(|k| *k = true);
                1.0
            }
            MaskKind::Random => {
                keep_frame.iter_mut().for_each(|k| *k = !rng.random_bool(p_frame));
                1.0 / ((1.0 - p_joint) * (1.0 - p_frame))
            }
            MaskKind::TemporalBlock { block } => {
                if block == 0 {
                    return Err(Error::Config("mask block size must be ≥ 1".into()));
                }
                keep_frame.iter_mut().for_each(|k| *k = true);
                let start_p = (p_frame / block as f64).min(1.0);
                for s in 0..t {
                    if rng.random_bool(start_p) {
                        keep_frame[s..(s + block).min(t)].iter_mut().for_each(|k| *k = false);
                    }
                }
                let kept_j = keep_joint.iter().filter(|&&k| k).count();
                let kept_f = keep_frame.iter().filter(|&&k| k).count();
                if kept_j * kept_f == 0 {
                    1.0
                } else {
                    (t * v) as f64 / (kept_j * kept_f) as f64
                }
            }
        };
        let scale = F::from_f64(scale);
        for &kf in &keep_frame {
            for &kj in &keep_joint {
                values.push(if kf && kj { scale } else { F::zero() });
            }
        }
    }
    Ok(Mask {
        shape: [n, t, v],
        values,
    })
}

/// Applies randomized joint/frame masking when `training`; identity otherwise.
///
/// Returns the mask that was applied so the caller can run backward.
pub fn random_st_mask<F: Scalar, R: Rng + ?Sized>(
    x: &Tensor<F>,
    p_joint: f64,
    p_frame: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<F>, Option<Mask<F>>)> {
    masked(x, MaskKind::Random, p_joint, p_frame, training, rng)
}

pub fn masked<F: Scalar, R: Rng + ?Sized>(
    x: &Tensor<F>,
    kind: MaskKind,
    p_joint: f64,
    p_frame: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<F>, Option<Mask<F>>)> {
    check_prob(p_joint, "joint mask probability")?;
    check_prob(p_frame, "frame mask probability")?;
    if !training || kind == MaskKind::None || (p_joint == 0.0 && p_frame == 0.0) {
        return Ok((x.clone(), None));
    }
    let mask = sample_mask(x.shape(), kind, p_joint, p_frame, rng)?;
    Ok((mask.apply(x), Some(mask)))
}
