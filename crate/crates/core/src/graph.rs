//! Joint graph and adjacency machinery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Scalar;

pub const BODY25_JOINTS: usize = 25;

/// BODY_25 joint indices used elsewhere in the crate.
pub mod joint {
    pub const NOSE: usize = 0;
    pub const NECK: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const R_ELBOW: usize = 3;
    pub const R_WRIST: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const L_ELBOW: usize = 6;
    pub const L_WRIST: usize = 7;
    pub const MID_HIP: usize = 8;
    pub const R_HIP: usize = 9;
    pub const R_KNEE: usize = 10;
    pub const R_ANKLE: usize = 11;
    pub const L_HIP: usize = 12;
    pub const L_KNEE: usize = 13;
    pub const L_ANKLE: usize = 14;
    pub const R_EYE: usize = 15;
    pub const L_EYE: usize = 16;
    pub const R_EAR: usize = 17;
    pub const L_EAR: usize = 18;
    pub const L_BIG_TOE: usize = 19;
    pub const L_SMALL_TOE: usize = 20;
    pub const L_HEEL: usize = 21;
    pub const R_BIG_TOE: usize = 22;
    pub const R_SMALL_TOE: usize = 23;
    pub const R_HEEL: usize = 24;
}

/// Kinematic tree of the BODY_25 layout.
pub const BODY25_EDGES: [(usize, usize); 24] = [
    (0, 1),   // nose - neck
    (1, 2),   // neck - right shoulder
    (2, 3),
    (3, 4),
    (1, 5),   // neck - left shoulder
    (5, 6),
    (6, 7),
    (1, 8),   // neck - mid hip
    (8, 9),   // right leg
    (9, 10),
    (10, 11),
    (8, 12),  // left leg
    (12, 13),
    (13, 14),
    (0, 15),  // face
    (15, 17),
    (0, 16),
    (16, 18),
    (14, 19), // left foot
    (19, 20),
    (14, 21),
    (11, 22), // right foot
    (22, 23),
    (11, 24),
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `D⁻¹·A`, rows sum to one.
    #[default]
    Row,
    /// `D^{-1/2}·A·D^{-1/2}`.
    Symmetric,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonGraph {
    pub num_joints: usize,
    pub edges: Vec<(usize, usize)>,
    /// Binary adjacency with self-loops, row-major.
    pub adjacency: Vec<u8>,
    /// Normalized adjacency, row-major.
    pub normalized: Vec<f64>,
    pub normalization: Normalization,
}

impl SkeletonGraph {
    pub fn from_edges(
        num_joints: usize,
        edges: &[(usize, usize)],
        normalization: Normalization,
    ) -> Result<Self> {
        if num_joints == 0 {
            return Err(Error::Config("graph needs at least one joint".into()));
        }
        let mut adjacency = vec![0u8; num_joints * num_joints];
        for i in 0..num_joints {
            adjacency[i * num_joints + i] = 1;
        }
        for &(i, j) in edges {
            if i >= num_joints || j >= num_joints {
                return Err(Error::Config(format!(
                    "edge ({i},{j}) outside a {num_joints}-joint graph"
                )));
            }
            adjacency[i * num_joints + j] = 1;
            adjacency[j * num_joints + i] = 1;
        }
        let normalized = normalize_adjacency(&adjacency, num_joints, normalization)?;
        Ok(Self {
            num_joints,
            edges: edges.to_vec(),
            adjacency,
            normalized,
            normalization,
        })
    }

    pub fn body25() -> Self {
        Self::body25_with(Normalization::Row)
    }

    pub fn body25_with(normalization: Normalization) -> Self {
        Self::from_edges(BODY25_JOINTS, &BODY25_EDGES, normalization)
            .expect("BODY_25 edge table is well formed")
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> u8 {
        self.adjacency[i * self.num_joints + j]
    }

    /// Normalized adjacency converted to the working precision.
    pub fn normalized_as<F: Scalar>(&self) -> Vec<F> {
        self.normalized.iter().map(|&v| F::from_f64(v)).collect()
    }

    /// Edge list as text, one `i j` pair per line.
    pub fn edge_table(&self) -> String {
        let mut s = String::new();
        for &(i, j) in &self.edges {
            s.push_str(&format!("{i} {j}\n"));
        }
        s
    }

    pub fn from_edge_table(num_joints: usize, text: &str, normalization: Normalization) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("edge table line {}: {e}", lineno + 1)))?;
            match parsed.as_slice() {
                [i, j] => edges.push((*i, *j)),
                _ => {
                    return Err(Error::Config(format!(
                        "edge table line {}: expected two indices",
                        lineno + 1
                    )))
                }
            }
        }
        Self::from_edges(num_joints, &edges, normalization)
    }
}

/// Builds the BODY_25 graph with row normalization.
pub fn build_body25_graph() -> SkeletonGraph {
    SkeletonGraph::body25()
}

/// Normalizes a binary `n×n` adjacency (row-major) by its row degrees.
pub fn normalize_adjacency(adjacency: &[u8], n: usize, normalization: Normalization) -> Result<Vec<f64>> {
    if adjacency.len() != n * n {
        return Err(Error::Shape(format!("{} entries for a {n}×{n} adjacency", adjacency.len())));
    }
    let degree: Vec<f64> = adjacency
        .chunks_exact(n)
        .map(|row| row.iter().map(|&a| a as f64).sum())
        .collect();
    if let Some(i) = degree.iter().position(|&d| d == 0.0) {
        return Err(Error::Internal(format!("joint {i} has zero degree")));
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let a = adjacency[i * n + j] as f64;
            out[i * n + j] = match normalization {
                Normalization::Row => a / degree[i],
                Normalization::Symmetric => a / (degree[i] * degree[j]).sqrt(),
            };
        }
    }
    Ok(out)
}

/// Elementwise product `Â ⊙ M`.
pub fn effective_adjacency<F: Scalar>(normalized: &[F], modulation: &[F]) -> Result<Vec<F>> {
    if normalized.len() != modulation.len() {
        return Err(Error::Shape(format!(
            "adjacency has {} entries, modulation {}",
            normalized.len(),
            modulation.len()
        )));
    }
    Ok(normalized.iter().zip(modulation).map(|(&a, &m)| a * m).collect())
}
