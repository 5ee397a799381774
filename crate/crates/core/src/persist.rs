//! JSON manifest plus one UDET file per parameter.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub kind: String,
    pub dtype: String,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

pub fn save_params(
    dir: impl AsRef<Path>,
    kind: &str,
    meta: serde_json::Value,
    params: &[(String, Tensor<f32>)],
) -> Result<ParamManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(params.len());
    for (name, t) in params {
        let file = format!("{name}.udet");
        t.save(dir.join(&file))?;
        entries.push(ParamEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            file,
            sha256: t.digest()?,
        });
    }
    let manifest = ParamManifest {
        kind: kind.to_string(),
        dtype: "f32".to_string(),
        meta,
        params: entries,
    };
    write_json(dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_params(
    dir: impl AsRef<Path>,
    kind: &str,
) -> Result<(ParamManifest, HashMap<String, Tensor<f32>>)> {
    let dir = dir.as_ref();
    let manifest: ParamManifest = read_json(dir.join(MANIFEST_FILE))?;
    if manifest.kind != kind {
        return Err(Error::Format(format!(
            "expected a {kind} manifest, found {}",
            manifest.kind
        )));
    }
    let mut out = HashMap::new();
    for p in &manifest.params {
        let t = Tensor::load(dir.join(&p.file))?;
        if t.shape() != p.shape.as_slice() {
            return Err(Error::Format(format!(
                "{} has shape {:?}, manifest says {:?}",
                p.name,
                t.shape(),
                p.shape
            )));
        }
        out.insert(p.name.clone(), t);
    }
    Ok((manifest, out))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    use sha2::{Digest, Sha256};
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}
