//! Skeleton sequences: OpenPose ingestion, cleaning, canonicalization and
//! conversion to feature tensors.

mod features;
mod io;
mod openpose;
mod preprocess;

use serde::{Deserialize, Serialize};

pub use features::{motion_stream, to_feature_tensor, to_feature_tensor_with, InputChannels};
pub use io::{read_sequences, read_sequences_from_str, write_sequences, write_sequences_to_string};
pub use openpose::{
    openpose_document, parse_openpose_frame, read_openpose_dir, select_primary_skeleton,
};
pub use preprocess::{
    normalize_sequence, pad_to_length, remove_empty_frames, view_invariant_transform,
    PreprocessConfig,
};

use crate::graph::BODY25_JOINTS;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Joint2D {
    pub x: f32,
    pub y: f32,
    pub confidence: f32,
}

impl Joint2D {
    pub const fn new(x: f32, y: f32, confidence: f32) -> Self {
        Self { x, y, confidence }
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.confidence == 0.0
    }
}

/// One time slice: the 25 BODY_25 joints in OpenPose order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<[f32; 3]>", try_from = "Vec<[f32; 3]>")]
pub struct Frame {
    pub joints: [Joint2D; BODY25_JOINTS],
}

impl Default for Frame {
    fn default() -> Self {
        Self::empty()
    }
}

impl Frame {
    pub const fn empty() -> Self {
        Self {
            joints: [Joint2D::new(0.0, 0.0, 0.0); BODY25_JOINTS],
        }
    }

    /// OpenPose writes exact zeros for frames without a detection.
    pub fn is_empty(&self) -> bool {
        self.joints.iter().all(Joint2D::is_zero)
    }

    pub fn from_flat(values: &[f32]) -> Option<Self> {
        if values.len() != 3 * BODY25_JOINTS {
            return None;
        }
        let mut f = Self::empty();
        for (j, c) in values.chunks_exact(3).enumerate() {
            f.joints[j] = Joint2D::new(c[0], c[1], c[2]);
        }
        Some(f)
    }

    pub fn to_flat(&self) -> Vec<f32> {
        self.joints
            .iter()
            .flat_map(|j| [j.x, j.y, j.confidence])
            .collect()
    }

    pub fn translated(&self, dx: f32, dy: f32) -> Self {
        let mut f = *self;
        for j in f.joints.iter_mut() {
            j.x += dx;
            j.y += dy;
        }
        f
    }
}

impl From<Frame> for Vec<[f32; 3]> {
    fn from(f: Frame) -> Self {
        f.joints.iter().map(|j| [j.x, j.y, j.confidence]).collect()
    }
}

impl TryFrom<Vec<[f32; 3]>> for Frame {
    type Error = String;

    fn try_from(v: Vec<[f32; 3]>) -> Result<Self, Self::Error> {
        if v.len() != BODY25_JOINTS {
            return Err(format!("frame has {} joints, expected {BODY25_JOINTS}", v.len()));
        }
        let mut f = Frame::empty();
        for (j, [x, y, c]) in v.into_iter().enumerate() {
            if !(x.is_finite() && y.is_finite()) {
                return Err(format!("joint {j} has non-finite coordinates"));
            }
            if !(0.0..=1.0).contains(&c) {
                return Err(format!("joint {j} confidence {c} outside [0, 1]"));
            }
            f.joints[j] = Joint2D::new(x, y, c);
        }
        Ok(f)
    }
}

/// Split-relevant metadata. Ids are 1-based; 0 means unknown.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceMeta {
    #[serde(default)]
    pub subject_id: u32,
    #[serde(default)]
    pub view_id: u32,
    #[serde(default)]
    pub setup_id: u32,
    #[serde(default)]
    pub trial_id: u32,
    #[serde(default)]
    pub action_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fall_type: Option<String>,
    pub is_fall: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSequence {
    pub fps: f32,
    pub meta: SequenceMeta,
    pub frames: Vec<Frame>,
    /// Set when the view-invariant transform could not find a reference MidHip.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub view_transform_skipped: bool,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<Frame>, fps: f32, meta: SequenceMeta) -> Self {
        Self {
            fps,
            meta,
            frames,
            view_transform_skipped: false,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn label(&self) -> usize {
        usize::from(self.meta.is_fall)
    }
}
