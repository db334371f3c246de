//! Binary checkpoints: an 8-byte magic, a little-endian `u32` version and
//! `u64` header length, a JSON header, then every tensor as little-endian
//! `f64` in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, SfktModel, TableSizes};
use crate::error::ModelError;
use crate::total_term::CountStats;

const MAGIC: &[u8; 8] = b"SFKTCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub sizes: TableSizes,
    pub stats: CountStats,
    pub vocab_hash: String,
    pub tensors: Vec<TensorMeta>,
    /// Free-form provenance (seed, tool version, training summary).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

fn io_err(e: std::io::Error) -> ModelError {
    ModelError::Io(e)
}

pub fn save_checkpoint(
    path: &Path,
    model: &SfktModel,
    vocab_hash: &str,
    metadata: serde_json::Value,
) -> Result<CheckpointHeader, ModelError> {
    let header = CheckpointHeader {
        config: model.config,
        sizes: model.sizes,
        stats: model.stats,
        vocab_hash: vocab_hash.to_string(),
        tensors: model
            .params
            .iter()
            .map(|(_, p)| TensorMeta {
                name: p.name().to_string(),
                shape: p.shape().to_vec(),
                trainable: p.trainable(),
            })
            .collect(),
        metadata,
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(20 + json.len() + model.params.num_scalars() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, p) in model.params.iter() {
        for v in p.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&buf).map_err(io_err)?;
    Ok(header)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], ModelError> {
    if bytes.len() < n {
        return Err(ModelError::Checkpoint("truncated file".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn load_checkpoint(path: &Path) -> Result<(SfktModel, CheckpointHeader), ModelError> {
    let raw = fs::read(path).map_err(io_err)?;
    let mut bytes = raw.as_slice();
    if take(&mut bytes, 8)? != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().unwrap()) as usize;
    let header: CheckpointHeader = serde_json::from_slice(take(&mut bytes, len)?)?;

    let mut model = SfktModel::zeroed(header.config, header.sizes, header.stats)?;
    if header.tensors.len() != model.params.len() {
        return Err(ModelError::Checkpoint(format!(
            "expected {} tensors, found {}",
            model.params.len(),
            header.tensors.len()
        )));
    }
    for meta in &header.tensors {
        let id = model
            .params
            .id(&meta.name)
            .ok_or_else(|| ModelError::Checkpoint(format!("unknown tensor `{}`", meta.name)))?;
        let p = model.params.get_mut(id);
        if p.shape() != meta.shape.as_slice() {
            return Err(ModelError::ShapeMismatch {
                name: meta.name.clone(),
                expected: p.shape().to_vec(),
                found: meta.shape.iter().product(),
            });
        }
        let n = p.len();
        let data = take(&mut bytes, n * 8)?;
        for (dst, chunk) in p.data_mut().iter_mut().zip(data.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if !bytes.is_empty() {
        return Err(ModelError::Checkpoint(format!("{} trailing bytes", bytes.len())));
    }
    Ok((model, header))
}

/// Loads a checkpoint and rejects it unless it was trained on a vocabulary
/// with hash `vocab_hash`.
pub fn load_checkpoint_for(path: &Path, vocab_hash: &str) -> Result<(SfktModel, CheckpointHeader), ModelError> {
    let (model, header) = load_checkpoint(path)?;
    if header.vocab_hash != vocab_hash {
        return Err(ModelError::VocabMismatch {
            expected: vocab_hash.to_string(),
            found: header.vocab_hash,
        });
    }
    Ok((model, header))
}
