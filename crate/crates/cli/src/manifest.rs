//! Run manifests: what a command read, what it wrote, and the seeds and
//! configuration needed to redo it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ude_core::persist::file_digest;
use ude_core::pipeline::{PipelineConfig, StageSeeds};

use crate::commands::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub stage_seeds: StageSeeds,
    pub config: PipelineConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

/// Every regular file under `root`, sorted, with paths relative to `base`.
pub fn digest_tree(base: &Path, root: &Path) -> Result<Vec<FileDigest>, CliError> {
    let mut files = Vec::new();
    collect(root, &mut files)?;
    files.sort();
    files
        .into_iter()
        .map(|p| {
            Ok(FileDigest {
                sha256: file_digest(&p)?,
                path: p.strip_prefix(base).unwrap_or(&p).to_path_buf(),
            })
        })
        .collect()
}

fn collect(p: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    if p.is_file() {
        out.push(p.to_path_buf());
    } else if p.is_dir() {
        for entry in std::fs::read_dir(p)? {
            collect(&entry?.path(), out)?;
        }
    }
    Ok(())
}

impl RunManifest {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            stage_seeds: cfg.seeds(),
            config: cfg.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn input(&mut self, cfg: &PipelineConfig, rel: &str) -> Result<(), CliError> {
        self.inputs.extend(digest_tree(&cfg.out, &cfg.out.join(rel))?);
        Ok(())
    }

    pub fn output(&mut self, cfg: &PipelineConfig, rel: &str) -> Result<(), CliError> {
        self.outputs.extend(digest_tree(&cfg.out, &cfg.out.join(rel))?);
        Ok(())
    }

    /// Written to `<out>/manifests/<command>.json`.
    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let dir = out.join("manifests");
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{}.json", self.command));
        ude_core::persist::write_json(&path, self)?;
        Ok(path)
    }
}
