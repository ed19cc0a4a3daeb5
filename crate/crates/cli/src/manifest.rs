use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL_VERSION: &str = concat!("trajmask ", env!("CARGO_PKG_VERSION"));

/// Record of one run: enough to re-execute it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// The resolved configuration after flag overrides.
    pub config: Value,
    /// Hex SHA-256 of the compact JSON encoding of `config`.
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<PathBuf>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seeds: Vec<u64>, artifacts: Vec<PathBuf>) -> Self {
        Self {
            command: command.to_string(),
            config_digest: config_digest(&config),
            config,
            seeds,
            artifacts,
            tool_version: TOOL_VERSION.to_string(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_input(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn digest_matches(&self) -> bool {
        config_digest(&self.config) == self.config_digest
    }
}

pub fn config_digest(config: &Value) -> String {
    let compact = serde_json::to_string(config).expect("JSON values always serialize");
    hex::encode(Sha256::digest(compact.as_bytes()))
}

/// `<path>.manifest.json`.
pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

pub fn read_input(path: &Path) -> Result<String, CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("file not found: {}", path.display())));
    }
    fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

pub fn write_manifest(primary: &Path, manifest: &RunManifest) -> Result<PathBuf, CliError> {
    let path = manifest_path(primary);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}
