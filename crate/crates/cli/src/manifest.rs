//! Run manifests: what a command read and wrote, with content hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use t1rho_inr::config::Stage;
use t1rho_inr::ExperimentConfig;

use crate::error::{CliError, CliResult};
use crate::Command;

pub const TOOL: &str = "t1rho-recon";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One file a command consumed or produced. `path` is relative to the input
/// or output directory of the run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub coils: u64,
    pub noise: u64,
    pub mask: u64,
    pub network: u64,
}

impl Seeds {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Seeds {
            master: cfg.seed,
            coils: cfg.stage_seed(Stage::Coils),
            noise: cfg.stage_seed(Stage::Noise),
            mask: cfg.stage_seed(Stage::Mask),
            network: cfg.stage_seed(Stage::Network),
        }
    }
}

/// Everything needed to rerun a command and check its outputs.
///
/// `output_digest` covers the output records only; `timings_ms` is
/// informational and excluded from every comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    #[serde(default)]
    pub details: BTreeMap<String, serde_json::Value>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub output_digest: String,
    #[serde(default)]
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn digest_of(outputs: &[FileRecord]) -> String {
        let mut sorted: Vec<&FileRecord> = outputs.iter().collect();
        sorted.sort_by(|a, b| a.path.cmp(&b.path));
        let mut h = Sha256::new();
        for r in sorted {
            h.update(r.path.as_bytes());
            h.update([0u8]);
            h.update(r.sha256.as_bytes());
            h.update([b'\n']);
        }
        hex::encode(h.finalize())
    }

    pub fn output(&self, role: &str) -> Option<&FileRecord> {
        self.outputs.iter().find(|r| r.role == role)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::Manifest(e.to_string()))?;
        if m.tool != TOOL {
            return Err(CliError::Manifest(format!("written by `{}`, not {TOOL}", m.tool)));
        }
        if Self::digest_of(&m.outputs) != m.output_digest {
            return Err(CliError::Manifest("output digest does not match the listed outputs".into()));
        }
        Ok(m)
    }

    /// Checks that `rerun` produced the same files with the same hashes.
    pub fn verify_rerun(&self, rerun: &RunManifest) -> CliResult<()> {
        let index: BTreeMap<&str, &FileRecord> = rerun.outputs.iter().map(|r| (r.path.as_str(), r)).collect();
        for r in &self.outputs {
            match index.get(r.path.as_str()) {
                None => return Err(CliError::NotReproducible(format!("{} was not produced", r.path))),
                Some(o) if o.sha256 != r.sha256 => {
                    return Err(CliError::NotReproducible(format!(
                        "{} has sha256 {} instead of {}",
                        r.path, o.sha256, r.sha256
                    )))
                }
                Some(_) => {}
            }
        }
        if rerun.outputs.len() != self.outputs.len() {
            return Err(CliError::NotReproducible(format!(
                "{} outputs instead of {}",
                rerun.outputs.len(),
                self.outputs.len()
            )));
        }
        Ok(())
    }
}

/// Collects file records and timings while a command runs.
pub(crate) struct Recorder {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    details: BTreeMap<String, serde_json::Value>,
    timings: BTreeMap<String, f64>,
}

impl Recorder {
    pub fn new(input_dir: &Path, output_dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(output_dir).map_err(|e| CliError::io(output_dir, e))?;
        Ok(Recorder {
            input_dir: input_dir.to_path_buf(),
            output_dir: output_dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: BTreeMap::new(),
            timings: BTreeMap::new(),
        })
    }

    /// Reads an input file and records its hash.
    pub fn read(&mut self, role: &str, rel: &str) -> CliResult<Vec<u8>> {
        let path = self.input_dir.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.inputs.push(FileRecord {
            role: role.into(),
            path: rel.into(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(bytes)
    }

    pub fn read_tensor(&mut self, role: &str, rel: &str) -> CliResult<t1rho_inr::tensor_io::Tensor> {
        let bytes = self.read(role, rel)?;
        Ok(t1rho_inr::tensor_io::Tensor::from_bytes(&bytes)?)
    }

    pub fn write(&mut self, role: &str, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.output_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        t1rho_inr::tensor_io::write_atomic(&path, bytes)?;
        self.outputs.retain(|r| r.path != rel);
        self.outputs.push(FileRecord {
            role: role.into(),
            path: rel.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_tensor(&mut self, role: &str, rel: &str, t: &t1rho_inr::tensor_io::Tensor) -> CliResult<()> {
        self.write(role, rel, &t.to_bytes()?)
    }

    /// Records a file some library routine already wrote under the output
    /// directory.
    pub fn record_written(&mut self, role: &str, rel: &str) -> CliResult<()> {
        let path = self.output_dir.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.outputs.retain(|r| r.path != rel);
        self.outputs.push(FileRecord {
            role: role.into(),
            path: rel.into(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn detail(&mut self, key: &str, value: serde_json::Value) {
        self.details.insert(key.into(), value);
    }

    pub fn time<R>(&mut self, label: &str, f: impl FnOnce() -> R) -> R {
        let t0 = std::time::Instant::now();
        let r = f();
        *self.timings.entry(label.into()).or_default() += t0.elapsed().as_secs_f64() * 1e3;
        r
    }

    /// Merges a finished sub-run (used when one command chains others).
    pub fn absorb(&mut self, prefix: &str, m: &RunManifest) {
        for r in &m.outputs {
            self.outputs.retain(|o| o.path != r.path);
            self.outputs.push(r.clone());
        }
        for (k, v) in &m.timings_ms {
            self.timings.insert(format!("{prefix}.{k}"), *v);
        }
    }

    pub fn finish(mut self, command: Command, cfg: &ExperimentConfig, manifest_name: &str) -> CliResult<RunManifest> {
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let m = RunManifest {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            config: cfg.clone(),
            seeds: Seeds::of(cfg),
            details: self.details,
            inputs: self.inputs,
            output_digest: RunManifest::digest_of(&self.outputs),
            outputs: self.outputs,
            timings_ms: self.timings,
        };
        let text = serde_json::to_string_pretty(&m).map_err(t1rho_inr::Error::from)?;
        t1rho_inr::tensor_io::write_atomic(&self.output_dir.join(manifest_name), text.as_bytes())?;
        Ok(m)
    }
}
