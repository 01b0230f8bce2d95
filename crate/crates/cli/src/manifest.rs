use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one command: what ran, with which seeds, and what it wrote.
/// Timings are the only non-deterministic content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: PipelineConfig,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<Artifact>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn artifact(&self, file: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.file == file)
    }

    /// Files whose current contents no longer match their recorded hash.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.artifacts
            .iter()
            .filter(|a| match std::fs::read(dir.join(&a.file)) {
                Ok(bytes) => sha256_hex(&bytes) != a.sha256,
                Err(_) => true,
            })
            .map(|a| a.file.clone())
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest_name(command: &str) -> String {
    if command == "run" {
        "manifest.json".into()
    } else {
        format!("manifest_{command}.json")
    }
}

/// Buffers a command's outputs so that nothing touches disk until every
/// stage has succeeded; the manifest is written last.
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    timings: BTreeMap<String, f64>,
    seeds: BTreeMap<String, u64>,
}

impl Outputs {
    pub fn new() -> Self {
        Self {
            files: Vec::new(),
            timings: BTreeMap::new(),
            seeds: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, file: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((file.to_string(), contents.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, file: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.add(file, text);
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    /// Runs `f`, recording its wall-clock time under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings
            .insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub fn write(self, command: &str, config: &PipelineConfig) -> Result<RunManifest, CliError> {
        let dir: PathBuf = config.output_dir.clone();
        let io = |e: std::io::Error, what: &Path| CliError::Data {
            stage: "emit",
            message: format!("{}: {e}", what.display()),
        };
        std::fs::create_dir_all(&dir).map_err(|e| io(e, &dir))?;
        let mut artifacts = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| io(e, &path))?;
            artifacts.push(Artifact {
                file: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            });
        }
        let manifest = RunManifest {
            command: command.to_string(),
            config: config.clone(),
            seeds: self.seeds,
            artifacts,
            timings_ms: self.timings,
        };
        let path = dir.join(manifest_name(command));
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifests serialize");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io(e, &path))?;
        Ok(manifest)
    }
}

impl Default for Outputs {
    fn default() -> Self {
        Self::new()
    }
}
