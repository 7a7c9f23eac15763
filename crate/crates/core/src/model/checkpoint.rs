//! Checkpoint files.
//!
//! Layout: a header line `SDFA-CHECKPOINT <version> <manifest bytes>`, the
//! JSON manifest (config, graph edges, tensor names, shapes and offsets),
//! then every tensor as little-endian `f32` in manifest order.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, SdfaModel};
use crate::error::{Error, Result};
use crate::graph::SkeletonGraph;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "SDFA-CHECKPOINT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in `f32` elements from the start of the data section.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub num_joints: usize,
    pub edges: Vec<(usize, usize)>,
    pub tensors: Vec<TensorEntry>,
}

/// Named tensors in checkpoint order: parameters, then BN running statistics.
fn state(model: &SdfaModel<f32>) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut out: Vec<_> = model
        .params()
        .into_iter()
        .map(|(n, p)| (n, p.shape.clone(), p.values.clone()))
        .collect();
    for (prefix, bn) in model.batch_norms() {
        let c = bn.channels();
        out.push((format!("{prefix}.bn.running_mean"), vec![c], bn.running_mean.clone()));
        out.push((format!("{prefix}.bn.running_var"), vec![c], bn.running_var.clone()));
    }
    out
}

pub fn to_bytes(model: &SdfaModel<f32>) -> Result<Vec<u8>> {
    let tensors = state(model);
    let mut offset = 0;
    let entries = tensors
        .iter()
        .map(|(name, shape, values)| {
            let e = TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
            };
            offset += values.len();
            e
        })
        .collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        num_joints: model.graph.num_joints,
        edges: model.graph.edges.clone(),
        tensors: entries,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = format!("{MAGIC} {FORMAT_VERSION} {}\n", json.len()).into_bytes();
    out.extend_from_slice(&json);
    for (_, _, values) in &tensors {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save(model: &SdfaModel<f32>, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn from_bytes(bytes: &[u8]) -> Result<SdfaModel<f32>> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut reader = std::io::Cursor::new(bytes);
    let mut header = String::new();
    reader.read_line(&mut header).map_err(|e| bad(e.to_string()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [magic, version, len] = fields.as_slice() else {
        return Err(bad("missing checkpoint header".into()));
    };
    if *magic != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version: u32 = version.parse().map_err(|_| bad(format!("bad version {version:?}")))?;
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let len: usize = len.parse().map_err(|_| bad(format!("bad manifest length {len:?}")))?;
    let mut json = vec![0u8; len];
    reader.read_exact(&mut json).map_err(|_| bad("truncated manifest".into()))?;
    let manifest: Manifest = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
    if manifest.format_version != version {
        return Err(bad("manifest version disagrees with header".into()));
    }
    let mut data = Vec::new();
    reader.read_to_end(&mut data)?;
    if data.len() % 4 != 0 {
        return Err(bad("data section is not a whole number of f32 values".into()));
    }
    let floats: Vec<f32> = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let graph = SkeletonGraph::from_edges(
        manifest.num_joints,
        &manifest.edges,
        manifest.config.adjacency_norm,
    )?;
    let mut model = SdfaModel::<f32>::new(&manifest.config, graph, 0)?;
    let expected = state(&model);
    if expected.len() != manifest.tensors.len() {
        return Err(bad(format!(
            "manifest lists {} tensors, model has {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let mut loaded = Vec::with_capacity(expected.len());
    for ((name, shape, _), entry) in expected.iter().zip(&manifest.tensors) {
        if *name != entry.name || *shape != entry.shape {
            return Err(bad(format!(
                "tensor {} {:?} does not match model tensor {name} {shape:?}",
                entry.name, entry.shape
            )));
        }
        let n: usize = shape.iter().product();
        let slice = floats
            .get(entry.offset..entry.offset + n)
            .ok_or_else(|| bad(format!("tensor {name} runs past the data section")))?;
        loaded.push(slice.to_vec());
    }
    let mut it = loaded.into_iter();
    for (_, p) in model.params_mut() {
        p.values = it.next().expect("count checked");
    }
    for bn in model.batch_norms_mut() {
        bn.running_mean = it.next().expect("count checked");
        bn.running_var = it.next().expect("count checked");
    }
    Ok(model)
}

pub fn load(path: &Path) -> Result<SdfaModel<f32>> {
    from_bytes(&std::fs::read(path)?)
}
