//! Experiment plumbing: stage artifacts in content-addressed directories,
//! each with a manifest naming its parameters, upstream artifacts and the
//! hashes of every file it wrote.
//!
//! A stage directory is `<root>/<stage>/<label>-<key>`, where `key` hashes
//! the stage parameters, the keys of its inputs and the code version.

mod config;
pub mod figures;
mod stages;

pub use config::{
    CostSection, DatasetSection, EvalSection, ExperimentConfig, PlanSection, VisionSection, WorldSection,
};
pub use stages::*;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad flags, config or invocation order.
    #[error("{0}")]
    Usage(String),
    #[error("missing {what} at {path}; run `terrasense {producer}` first")]
    MissingUpstream { what: String, producer: &'static str, path: PathBuf },
    #[error("missing inputs:\n{}", .0.join("\n"))]
    MissingInputs(Vec<String>),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl PipelineError {
    pub fn is_usage(&self) -> bool {
        matches!(self, Self::Usage(_) | Self::MissingUpstream { .. } | Self::MissingInputs(_))
    }
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Runtime(e.to_string())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Identity of one stage output.
#[derive(Debug, Clone, PartialEq)]
pub struct StageId {
    pub stage: &'static str,
    /// Human-readable prefix of the directory name.
    pub label: String,
    pub key: String,
    pub params: Value,
    pub upstream: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
}

impl StageId {
    pub fn new(
        stage: &'static str,
        label: impl Into<String>,
        params: Value,
        upstream: &[&StageId],
        seeds: Vec<u64>,
    ) -> Self {
        let label = label.into();
        let upstream: BTreeMap<String, String> =
            upstream.iter().map(|u| (format!("{}/{}", u.stage, u.label), u.key.clone())).collect();
        let doc = json!({
            "stage": stage,
            "label": label,
            "version": CODE_VERSION,
            "params": params,
            "upstream": upstream,
            "seeds": seeds,
        });
        let key = sha256_hex(doc.to_string().as_bytes())[..16].to_string();
        Self { stage, label, key, params, upstream, seeds }
    }

    pub fn dir_name(&self) -> String {
        if self.label.is_empty() {
            self.key.clone()
        } else {
            format!("{}-{}", self.label, self.key)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub label: String,
    /// Hash of parameters, upstream keys and code version.
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    pub params: Value,
    pub upstream: BTreeMap<String, String>,
    /// Relative path → SHA-256 of every output file.
    pub files: BTreeMap<String, String>,
}

pub const MANIFEST: &str = "manifest.json";

fn list_files(dir: &Path, prefix: &str, out: &mut Vec<(String, PathBuf)>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = format!("{prefix}{}", e.file_name().to_string_lossy());
        if e.file_type()?.is_dir() {
            list_files(&e.path(), &format!("{name}/"), out)?;
        } else if name != MANIFEST {
            out.push((name, e.path()));
        }
    }
    Ok(())
}

/// Artifact store rooted at an output directory.
#[derive(Debug, Clone)]
pub struct Store {
    pub root: PathBuf,
    /// Rebuild stages whose output already exists.
    pub force: bool,
    pub verbose: bool,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), force: false, verbose: false }
    }

    pub fn dir(&self, id: &StageId) -> PathBuf {
        self.root.join(id.stage).join(id.dir_name())
    }

    pub fn is_complete(&self, id: &StageId) -> bool {
        self.dir(id).join(MANIFEST).is_file()
    }

    pub(crate) fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Directory of a finished upstream stage.
    pub fn require(&self, id: &StageId, producer: &'static str) -> Result<PathBuf, PipelineError> {
        let dir = self.dir(id);
        if self.is_complete(id) {
            Ok(dir)
        } else {
            Err(PipelineError::MissingUpstream {
                what: format!("{} output '{}'", id.stage, id.label),
                producer,
                path: dir,
            })
        }
    }

    /// Run `body` into a scratch directory, then seal it with a manifest and
    /// move it into place. Finished stages are reused unless `force` is set.
    pub fn build(
        &self,
        id: &StageId,
        body: impl FnOnce(&Path) -> Result<(), PipelineError>,
    ) -> Result<PathBuf, PipelineError> {
        let dir = self.dir(id);
        if self.is_complete(id) && !self.force {
            self.note(format!("{} {}: up to date", id.stage, id.label));
            return Ok(dir);
        }
        self.note(format!("{} {}: building", id.stage, id.label));
        let parent = dir.parent().expect("stage dir has a parent");
        fs::create_dir_all(parent)?;
        let tmp = parent.join(format!(".tmp-{}", id.dir_name()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        body(&tmp)?;
        let mut files = Vec::new();
        list_files(&tmp, "", &mut files)?;
        let mut hashes = BTreeMap::new();
        for (name, path) in files {
            hashes.insert(name, sha256_hex(&fs::read(path)?));
        }
        let m = Manifest {
            stage: id.stage.to_string(),
            label: id.label.clone(),
            config_hash: id.key.clone(),
            code_version: CODE_VERSION.to_string(),
            seeds: id.seeds.clone(),
            params: id.params.clone(),
            upstream: id.upstream.clone(),
            files: hashes,
        };
        let text = serde_json::to_string_pretty(&m).map_err(runtime)?;
        fs::write(tmp.join(MANIFEST), text + "\n")?;
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(&tmp, &dir)?;
        Ok(dir)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, PipelineError> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    serde_json::from_str(&text).map_err(runtime)
}
