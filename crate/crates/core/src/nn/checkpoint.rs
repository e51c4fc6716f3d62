//! Parameter checkpoints: a flat file of little-endian `f32` values plus a
//! JSON sidecar (`<path>.json`) naming every tensor and its shape.

use super::{Params, TensorSpec};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: bad sidecar: {message}")]
    Sidecar { path: String, message: String },
    #[error("checkpoint holds {found} values, sidecar declares {declared}")]
    Length { found: usize, declared: usize },
    #[error("component {0} missing from checkpoint")]
    MissingComponent(String),
    #[error("component {name}: layout differs from the model ({message})")]
    Layout { name: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMeta {
    pub name: String,
    pub tensors: Vec<TensorSpec>,
}

/// Sidecar contents plus the decoded values of each component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: u32,
    /// Model configuration needed to rebuild the layout.
    pub config: serde_json::Value,
    pub components: Vec<ComponentMeta>,
    #[serde(skip)]
    values: Vec<Vec<f64>>,
}

impl Checkpoint {
    /// Copies a stored component into `params`, checking the layout.
    pub fn restore(&self, name: &str, params: &mut Params) -> Result<(), CheckpointError> {
        let i = self
            .components
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| CheckpointError::MissingComponent(name.to_string()))?;
        if self.components[i].tensors != params.specs() {
            return Err(CheckpointError::Layout { name: name.to_string(), message: "tensor specs differ".into() });
        }
        params
            .load_values(&self.values[i])
            .map_err(|message| CheckpointError::Layout { name: name.to_string(), message })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.display().to_string(), source }
}

pub fn save_checkpoint(
    path: &Path,
    config: serde_json::Value,
    components: &[(&str, &Params)],
) -> Result<(), CheckpointError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    let mut bytes = Vec::new();
    let mut metas = Vec::new();
    for (name, p) in components {
        for v in &p.data {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        metas.push(ComponentMeta { name: name.to_string(), tensors: p.specs().to_vec() });
    }
    fs::write(path, &bytes).map_err(io(path))?;
    let meta = Checkpoint { schema: CHECKPOINT_SCHEMA, config, components: metas, values: Vec::new() };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
    fs::write(&side, text + "\n").map_err(io(&side))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(io(&side))?;
    let mut ck: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| CheckpointError::Sidecar { path: side.display().to_string(), message: e.to_string() })?;
    if ck.schema != CHECKPOINT_SCHEMA {
        return Err(CheckpointError::Sidecar {
            path: side.display().to_string(),
            message: format!("schema {} is not {CHECKPOINT_SCHEMA}", ck.schema),
        });
    }
    let bytes = fs::read(path).map_err(io(path))?;
    let declared: usize = ck.components.iter().flat_map(|c| &c.tensors).map(TensorSpec::numel).sum();
    if bytes.len() != declared * 4 {
        return Err(CheckpointError::Length { found: bytes.len() / 4, declared });
    }
    let mut at = 0;
    for c in &ck.components {
        let n: usize = c.tensors.iter().map(TensorSpec::numel).sum();
        let vals = bytes[at * 4..(at + n) * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        ck.values.push(vals);
        at += n;
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact_after_f32_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = Params::new();
        a.add("w", &[3, 2], 1.0, &mut rng);
        a.add("b", &[3], 1.0, &mut rng);
        a.round_to_f32();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&path, serde_json::json!({"hidden": 4}), &[("net", &a)]).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.config["hidden"], 4);
        let mut b = a.clone();
        b.data.iter_mut().for_each(|v| *v = 0.0);
        ck.restore("net", &mut b).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert!(matches!(ck.restore("other", &mut b), Err(CheckpointError::MissingComponent(_))));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = Params::new();
        a.add("w", &[4], 1.0, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&path, serde_json::Value::Null, &[("net", &a)]).unwrap();
        fs::write(&path, [0u8; 8]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Length { found: 2, declared: 4 })));
    }
}
