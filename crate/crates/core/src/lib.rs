//! Skeleton-based fall detection.
//!
//! The crate covers the whole pipeline from OpenPose keypoint files to a
//! trained classifier:
//!
//! * [`skeleton`] ingests BODY_25 keypoints, cleans and canonicalizes
//!   sequences, and lays them out as `(N, C, T, V)` feature tensors.
//! * [`graph`] builds the joint graph and its normalized adjacency.
//! * [`nn`] holds the differentiable kernels (1×1 convolution, batch norm,
//!   graph aggregation, separable temporal convolution, pooling, masking,
//!   softmax cross-entropy), each with an analytic backward pass.
//! * [`model`] assembles the network: early joint/motion fusion, two spatial
//!   graph blocks, two separable temporal blocks and a classifier head, plus
//!   parameter/MAC counters and checkpoints.
//! * [`train`] runs SGD with momentum, builds the evaluation splits and
//!   computes the binary metric suite.
//! * [`synth`] generates seeded fall / daily-activity sequences.

pub mod config;
pub mod error;
pub mod graph;
pub mod model;
pub mod nn;
pub mod skeleton;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

/// Random generator used everywhere randomness is needed. Seeded explicitly.
pub type SdfaRng = rand_chacha::ChaCha8Rng;

/// Creates the crate-wide generator from a seed.
pub fn rng_from_seed(seed: u64) -> SdfaRng {
    use rand::SeedableRng;
    SdfaRng::seed_from_u64(seed)
}
