//! Run configuration files and their digests.
//!
//! Configuration files are flat TOML: `key = value` lines, `#` comments.
//! Keys belong to the model (`channels`, `p_joint`, `fusion`, ...), the
//! trainer (`lr0`, `epochs`, `batch_size`, ...) or preprocessing
//! (`target_len`, ...). Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::skeleton::{InputChannels, PreprocessConfig};
use crate::train::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub input: InputChannels,
}

const MODEL_KEYS: &[&str] = &[
    "in_channels",
    "channels",
    "tcn_kernels",
    "tcn_strides",
    "num_classes",
    "p_joint",
    "p_frame",
    "mask",
    "use_learnable_adjacency",
    "modulation",
    "adjacency_norm",
    "fusion",
];
const TRAIN_KEYS: &[&str] = &[
    "lr0",
    "momentum",
    "epochs",
    "decay_factor",
    "decay_every",
    "batch_size",
    "seed",
];
const PREPROCESS_KEYS: &[&str] = &["target_len", "view_invariant", "normalize"];

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let mut model = toml::Table::new();
        let mut train = toml::Table::new();
        let mut pre = toml::Table::new();
        let mut input = None;
        for (k, v) in table {
            if MODEL_KEYS.contains(&k.as_str()) {
                model.insert(k, v);
            } else if TRAIN_KEYS.contains(&k.as_str()) {
                train.insert(k, v);
            } else if PREPROCESS_KEYS.contains(&k.as_str()) {
                pre.insert(k, v);
            } else if k == "input" {
                input = Some(v);
            } else {
                return Err(Error::Config(format!("unknown configuration key {k:?}")));
            }
        }
        fn conv<T: serde::de::DeserializeOwned>(t: toml::Table, what: &str) -> Result<T> {
            toml::Value::Table(t)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("{what}: {}", e.message())))
        }
        let mut cfg = RunConfig {
            model: conv(model, "model")?,
            train: conv(train, "training")?,
            preprocess: conv(pre, "preprocessing")?,
            input: match input {
                Some(v) => v
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::Config(format!("input: {}", e.message())))?,
                None => InputChannels::default(),
            },
        };
        if !table_has(text, "in_channels") {
            cfg.model.in_channels = cfg.input.count();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.model.in_channels != self.input.count() {
            return Err(Error::Config(format!(
                "in_channels {} disagrees with input {:?}",
                self.model.in_channels, self.input
            )));
        }
        if self.preprocess.target_len < 2 {
            return Err(Error::Config("target_len must be ≥ 2".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical (key-sorted) JSON form, as hex.
    pub fn digest(&self) -> String {
        digest_of(self)
    }
}

fn table_has(text: &str, key: &str) -> bool {
    text.parse::<toml::Table>().is_ok_and(|t| t.contains_key(key))
}

/// Digest of any serializable value, independent of field order.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    // serde_json::Value maps are ordered by key, which canonicalizes order.
    let canonical = serde_json::to_value(value).expect("config serializes");
    let bytes = serde_json::to_vec(&canonical).expect("value serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}
