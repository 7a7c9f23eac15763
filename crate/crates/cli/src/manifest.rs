use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdfa::config::RunConfig;
use sdfa::Result;

/// Record written next to a command's outputs so the run can be repeated.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
    /// Arguments that are not part of the configuration (split, spec, ...).
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub args: serde_json::Map<String, serde_json::Value>,
    /// Full run configuration, when the command has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
}

/// `<output>.manifest.json`
pub fn path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

impl RunManifest {
    pub fn write_next_to(&self, output: &Path) -> Result<()> {
        std::fs::write(path_for(output), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_next_to(output: &Path) -> Result<Option<Self>> {
        let path = path_for(output);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&std::fs::read_to_string(path)?)?))
    }
}
