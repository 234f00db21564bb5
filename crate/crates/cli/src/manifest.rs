use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Record written next to every output artifact so a run can be repeated.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub input_digests: BTreeMap<String, String>,
    pub tool_version: String,
    pub wall_time_ms: u128,
}

pub struct ManifestBuilder {
    command: String,
    parameters: serde_json::Value,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, parameters: &impl Serialize, seed: Option<u64>) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            parameters: serde_json::to_value(parameters).unwrap_or(serde_json::Value::Null),
            seed,
            inputs: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    /// Digests a file, or every regular file directly inside a directory.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| CliError::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            for f in files {
                self.input(&f)?;
            }
            return Ok(());
        }
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.insert(path.display().to_string(), hex);
        Ok(())
    }

    pub fn finish(self) -> RunManifest {
        RunManifest {
            command: self.command,
            parameters: self.parameters,
            seed: self.seed,
            input_digests: self.inputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: self.started.elapsed().as_millis(),
        }
    }
}

/// Where the manifest for an output goes: `run_manifest.json` inside an
/// output directory, `<file>.manifest.json` next to an output file.
pub fn manifest_path(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        output.join("run_manifest.json")
    } else {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}

pub fn write_manifest(manifest: &RunManifest, output: &Path, is_dir: bool) -> Result<(), CliError> {
    let path = manifest_path(output, is_dir);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    framesed::io::write_atomic(&path, text.as_bytes())?;
    Ok(())
}
