//! JSON encoding of model checkpoints.
//!
//! Floats are written in shortest round-trip form, so save → load is exact
//! and repeated saves of the same weights are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use solace_core::activation::Squash;
use solace_core::checkpoint::Checkpoint;
use solace_core::Tensor;

use crate::error::{format_err, IoContext, Result};

#[derive(Serialize, Deserialize)]
struct TensorJson {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointJson {
    format_version: u32,
    input_dim: usize,
    hidden_dims: Vec<usize>,
    activation_flag: String,
    tensors: BTreeMap<String, TensorJson>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

pub fn to_json(ck: &Checkpoint) -> Result<String, String> {
    let mut tensors = BTreeMap::new();
    for (name, t) in &ck.tensors {
        if !t.is_finite() {
            return Err(format!("tensor `{name}` holds a non-finite value"));
        }
        tensors.insert(
            name.clone(),
            TensorJson {
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            },
        );
    }
    let doc = CheckpointJson {
        format_version: ck.format_version,
        input_dim: ck.input_dim,
        hidden_dims: ck.hidden_dims.clone(),
        activation_flag: ck.activation_flag.as_str().to_string(),
        tensors,
        meta: ck.meta.clone(),
    };
    serde_json::to_string(&doc).map_err(|e| e.to_string())
}

pub fn from_json(text: &str) -> Result<Checkpoint, String> {
    let doc: CheckpointJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let activation_flag =
        Squash::parse(&doc.activation_flag).ok_or_else(|| format!("unknown activation `{}`", doc.activation_flag))?;
    let mut ck = Checkpoint::new(doc.input_dim, doc.hidden_dims, activation_flag);
    ck.format_version = doc.format_version;
    for (name, t) in doc.tensors {
        let t = Tensor::from_vec(&t.shape, t.data).map_err(|e| format!("tensor `{name}`: {e}"))?;
        ck.push(name, &t);
    }
    ck.meta = doc.meta;
    ck.check_version().map_err(|e| e.to_string())?;
    Ok(ck)
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    let json = to_json(ck).map_err(|m| format_err(path, m))?;
    write_atomic(path, json.as_bytes())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).at(path)?;
    from_json(&text).map_err(|m| format_err(path, m))
}

/// Writes to a sibling temp file, then renames over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}
