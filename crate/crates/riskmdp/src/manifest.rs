//! Run manifests: what produced an output file, hashed so every output can
//! point back at it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use riskmdp_core::PlannerConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::io::{self, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Input files, keyed by role (`grid`, `mdp`, `plan`).
    pub inputs: BTreeMap<String, PathBuf>,
    /// SHA-256 of each input file's bytes, same keys.
    #[serde(default)]
    pub input_hashes: BTreeMap<String, String>,
    pub planner: Option<PlannerConfig>,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    /// Remaining command parameters.
    #[serde(default)]
    pub parameters: BTreeMap<String, Value>,
    pub output_dir: PathBuf,
}

impl RunManifest {
    pub fn new(command: &str, output: &Path) -> Self {
        Self {
            command: command.into(),
            inputs: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            planner: None,
            seeds: BTreeMap::new(),
            parameters: BTreeMap::new(),
            output_dir: output
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default(),
        }
    }

    /// Records an input file and the hash of its current contents.
    pub fn input(&mut self, role: &str, path: &Path) -> Result<(), IoError> {
        let bytes = std::fs::read(path).map_err(|source| IoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.inputs.insert(role.into(), path.to_path_buf());
        self.input_hashes.insert(role.into(), hex(&Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.parameters.insert(key.into(), v);
    }

    /// SHA-256 of the manifest's canonical JSON (sorted keys, compact).
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).unwrap_or(Value::Null);
        hex(&Sha256::digest(v.to_string().as_bytes()))
    }

    /// Manifest path for an output file: `plan.json` → `plan.manifest.json`,
    /// `plan.svg` → `plan.svg.manifest.json`.
    pub fn path_for(output: &Path) -> PathBuf {
        if output.extension().is_some_and(|e| e == "json") {
            output.with_extension("manifest.json")
        } else {
            let mut name = output.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            output.with_file_name(name)
        }
    }

    /// Writes the manifest next to `output` and returns its hash.
    pub fn write_for(&self, output: &Path) -> Result<String, IoError> {
        io::write_json_exact(&Self::path_for(output), self)?;
        Ok(self.hash())
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        io::read_json(path)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
