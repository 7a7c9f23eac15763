use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Normalization;
use crate::nn::MaskKind;

/// Which input streams feed the backbone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Joint coordinates only.
    Joint,
    /// Frame-to-frame joint motion only.
    Motion,
    /// Both streams encoded separately and summed before the backbone.
    #[default]
    EarlyFused,
}

/// Form of the learnable adjacency modulation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    /// Full `V×V` matrix multiplied elementwise with the adjacency.
    #[default]
    Matrix,
    /// One scalar gate per layer.
    ScalarGate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Widths after fusion, after the first and after the second graph block.
    pub channels: [usize; 3],
    pub tcn_kernels: [usize; 2],
    pub tcn_strides: [usize; 2],
    pub num_classes: usize,
    pub p_joint: f64,
    pub p_frame: f64,
    pub mask: MaskKind,
    pub use_learnable_adjacency: bool,
    pub modulation: Modulation,
    pub adjacency_norm: Normalization,
    pub fusion: Fusion,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            channels: [64, 128, 256],
            tcn_kernels: [3, 5],
            tcn_strides: [1, 2],
            num_classes: 2,
            p_joint: 0.05,
            p_frame: 0.05,
            mask: MaskKind::Random,
            use_learnable_adjacency: true,
            modulation: Modulation::Matrix,
            adjacency_norm: Normalization::Row,
            fusion: Fusion::EarlyFused,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.in_channels == 0 || self.channels.contains(&0) {
            return bad(format!(
                "channel counts must be positive: in {} plan {:?}",
                self.in_channels, self.channels
            ));
        }
        if let Some(k) = self.tcn_kernels.iter().find(|&&k| k % 2 == 0) {
            return bad(format!("temporal kernels must be odd, got {k}"));
        }
        if let Some(s) = self.tcn_strides.iter().find(|&&s| !(1..=2).contains(&s)) {
            return bad(format!("temporal strides must be 1 or 2, got {s}"));
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        for (p, what) in [(self.p_joint, "p_joint"), (self.p_frame, "p_frame")] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{what} must lie in [0, 1), got {p}"));
            }
        }
        if let MaskKind::TemporalBlock { block: 0 } = self.mask {
            return bad("mask block size must be ≥ 1".into());
        }
        Ok(())
    }
}
