use std::fs;
use std::path::{Path, PathBuf};

use bellbeam_core::config::RunConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to reproduce a run; `bellbeam <cmd> --config manifest.json`
/// re-runs it.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub started_at: String,
    pub finished_at: String,
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_list: Option<Vec<f64>>,
    pub resolved_config: Option<RunConfig>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<OutputFile>,
    pub outputs: Vec<OutputFile>,
}

/// Writes `contents` and records its digest.
pub struct OutputDir {
    root: PathBuf,
    outputs: Vec<OutputFile>,
}

impl OutputFile {
    pub fn of(file: impl Into<String>, contents: &[u8]) -> Self {
        Self {
            file: file.into(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents),
        }
    }
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(OutputFile::of(name, contents));
        Ok(path)
    }

    pub fn finish(self, mut manifest: RunManifest) -> CliResult<RunManifest> {
        manifest.outputs = self.outputs;
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

/// Writes a single-file result plus `<file>.manifest.json` beside it.
pub fn write_with_sidecar(path: &Path, contents: &[u8], mut manifest: RunManifest) -> CliResult<RunManifest> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    manifest.outputs = vec![OutputFile::of(name.clone(), contents)];
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let sidecar = path.with_file_name(format!("{name}.manifest.json"));
    fs::write(&sidecar, text).map_err(|e| CliError::io(&sidecar, e))?;
    Ok(manifest)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
