//! On-disk checkpoints.
//!
//! Layout: `<root>/<tileset>/v000003/{manifest.json, weights.bin}`. The
//! weights file is the trainable tensors in manifest order followed by the
//! batch-norm running statistics, all little-endian f32.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::ApmModel;
use super::network::Network;
use super::ApmError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const FORMAT: &str = "aesthevo-apm-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into `weights.bin`, in f32 elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub tileset: String,
    pub version: u64,
    pub seed: u64,
    pub trained_pairings: u64,
    pub input_side: usize,
    pub dtype: String,
    pub endianness: String,
    pub layers: Vec<Vec<usize>>,
    pub tensors: Vec<TensorEntry>,
    pub param_count: usize,
}

pub fn version_dir(root: &Path, tileset: &str, version: u64) -> PathBuf {
    root.join(tileset).join(format!("v{version:06}"))
}

fn tensor_layout(net: &Network<f32>) -> (Vec<TensorEntry>, usize) {
    let mut entries = Vec::new();
    let mut offset = 0;
    for (name, shape) in net.param_names().into_iter().zip(net.param_shapes()) {
        let len: usize = shape.iter().product();
        entries.push(TensorEntry { name, shape, offset });
        offset += len;
    }
    for (b, block) in net.blocks.iter().enumerate() {
        for stat in ["running_mean", "running_var"] {
            let len = block.bn.gamma.len();
            entries.push(TensorEntry {
                name: format!("block{}.bn.{stat}", b + 1),
                shape: vec![len],
                offset,
            });
            offset += len;
        }
    }
    (entries, offset)
}

pub fn manifest_for(model: &ApmModel) -> CheckpointManifest {
    let (tensors, _) = tensor_layout(&model.net);
    let mut layers = Vec::new();
    let mut side = model.net.input_side;
    for block in &model.net.blocks {
        if block.pool {
            side /= 2;
        }
        layers.push(vec![side, side, block.conv.out_c]);
    }
    layers.push(vec![model.net.head.inputs]);
    layers.push(vec![model.net.head.outputs]);
    CheckpointManifest {
        format: FORMAT.to_string(),
        tileset: model.tileset_id.clone(),
        version: model.version,
        seed: model.seed,
        trained_pairings: model.trained_pairings,
        input_side: model.net.input_side,
        dtype: "f32".into(),
        endianness: "little".into(),
        layers,
        tensors,
        param_count: model.param_count(),
    }
}

fn weight_bytes(net: &Network<f32>) -> Vec<u8> {
    net.params()
        .into_iter()
        .chain(net.bn_state())
        .flat_map(|t| t.iter().flat_map(|v| v.to_le_bytes()))
        .collect()
}

/// Writes a new version directory and returns it. Rewriting an existing
/// version succeeds only when the bytes are identical.
pub fn save_checkpoint(root: &Path, model: &ApmModel) -> Result<PathBuf, ApmError> {
    let dir = version_dir(root, &model.tileset_id, model.version);
    let manifest = serde_json::to_vec_pretty(&manifest_for(model)).map_err(|e| ApmError::Io(e.to_string()))?;
    let weights = weight_bytes(&model.net);
    if dir.exists() {
        let same = fs::read(dir.join(MANIFEST_FILE)).ok().as_deref() == Some(&manifest[..])
            && fs::read(dir.join(WEIGHTS_FILE)).ok().as_deref() == Some(&weights[..]);
        if same {
            return Ok(dir);
        }
        return Err(ApmError::VersionExists {
            path: dir.display().to_string(),
            version: model.version,
        });
    }
    let parent = dir.parent().expect("version dir has a parent");
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(".tmp-v{:06}-{}", model.version, std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    fs::write(tmp.join(WEIGHTS_FILE), &weights)?;
    fs::write(tmp.join(MANIFEST_FILE), &manifest)?;
    fs::rename(&tmp, &dir)?;
    Ok(dir)
}

/// Loads a version directory.
pub fn load_checkpoint(dir: &Path) -> Result<ApmModel, ApmError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(ApmError::MissingCheckpoint(dir.display().to_string()));
    }
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(&manifest_path)?)
        .map_err(|e| ApmError::Corrupt(e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(ApmError::Corrupt(format!("unknown format {}", manifest.format)));
    }
    let bytes = fs::read(dir.join(WEIGHTS_FILE))?;
    if bytes.len() % 4 != 0 {
        return Err(ApmError::Corrupt("weights length not a multiple of 4".into()));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut net = Network::<f32>::new(manifest.input_side, manifest.seed);
    let (layout, total) = tensor_layout(&net);
    if total != values.len() {
        return Err(ApmError::Corrupt(format!("expected {total} floats, found {}", values.len())));
    }
    if layout != manifest.tensors {
        return Err(ApmError::Corrupt("tensor layout differs from this build".into()));
    }
    let mut cursor = 0;
    for t in net.params_mut() {
        t.copy_from_slice(&values[cursor..cursor + t.len()]);
        cursor += t.len();
    }
    for t in net.bn_state_mut() {
        t.copy_from_slice(&values[cursor..cursor + t.len()]);
        cursor += t.len();
    }
    if !net.all_finite() {
        return Err(ApmError::Corrupt("non-finite weights".into()));
    }
    Ok(ApmModel {
        tileset_id: manifest.tileset,
        version: manifest.version,
        seed: manifest.seed,
        trained_pairings: manifest.trained_pairings,
        net,
    })
}

/// Versions present for a tileset, ascending.
pub fn list_versions(root: &Path, tileset: &str) -> Result<Vec<u64>, ApmError> {
    let dir = root.join(tileset);
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut versions: Vec<u64> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join(MANIFEST_FILE).is_file())
        .filter_map(|e| e.file_name().to_str()?.strip_prefix('v')?.parse().ok())
        .collect();
    versions.sort_unstable();
    Ok(versions)
}

/// Highest version for a tileset.
pub fn load_latest(root: &Path, tileset: &str) -> Result<ApmModel, ApmError> {
    let v = list_versions(root, tileset)?
        .pop()
        .ok_or_else(|| ApmError::MissingCheckpoint(root.join(tileset).display().to_string()))?;
    load_checkpoint(&version_dir(root, tileset, v))
}

/// Accepts a version directory, a tileset directory (latest version) or a
/// checkpoint root plus tileset.
pub fn resolve(path: &Path, tileset: Option<&str>) -> Result<ApmModel, ApmError> {
    if path.join(MANIFEST_FILE).is_file() {
        return load_checkpoint(path);
    }
    if let Some(t) = tileset {
        if path.join(t).is_dir() {
            return load_latest(path, t);
        }
    }
    if let (Some(parent), Some(name)) = (path.parent(), path.file_name().and_then(|n| n.to_str())) {
        if !list_versions(parent, name)?.is_empty() {
            return load_latest(parent, name);
        }
    }
    Err(ApmError::MissingCheckpoint(path.display().to_string()))
}
