//! Weight container: one line of UTF-8 JSON header, a `\n`, then the raw
//! little-endian `f32` blob. The header maps tensor names to shape, dtype,
//! byte offset and byte length (offsets relative to the blob start), and
//! carries the model config plus a SHA-256 of the blob.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{tensor_layout, ModelConfig, ModelWeights};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FORMAT_NAME: &str = "ablab-weights";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ModelConfig>,
    /// `sha256:<hex>` of the blob.
    pub hash: String,
    pub tensors: BTreeMap<String, TensorEntry>,
}

pub fn blob_hash(blob: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(blob)))
}

pub(super) fn encode_blob(tensors: &[&Tensor]) -> Vec<u8> {
    let total: usize = tensors.iter().map(|t| t.len() * 4).sum();
    let mut blob = Vec::with_capacity(total);
    for t in tensors {
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    blob
}

/// Serializes named tensors (blob laid out in the given order).
pub fn write_container(config: Option<ModelConfig>, tensors: &[(String, &Tensor)]) -> Vec<u8> {
    let mut entries = BTreeMap::new();
    let mut offset = 0;
    for (name, t) in tensors {
        let length = t.len() * 4;
        entries.insert(
            name.clone(),
            TensorEntry {
                shape: t.shape().to_vec(),
                dtype: "f32".into(),
                offset,
                length,
            },
        );
        offset += length;
    }
    let blob = encode_blob(&tensors.iter().map(|(_, t)| *t).collect::<Vec<_>>());
    let header = ContainerHeader {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        config,
        hash: blob_hash(&blob),
        tensors: entries,
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(&blob);
    out
}

/// Parses a container, verifying the hash before any offsets are trusted.
pub fn read_container(bytes: &[u8]) -> Result<(ContainerHeader, BTreeMap<String, Tensor>)> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("no header terminator".into()))?;
    let header: ContainerHeader = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.format != FORMAT_NAME {
        return Err(Error::Format(format!("unknown format {:?}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    let blob = &bytes[split + 1..];
    let actual = blob_hash(blob);
    if actual != header.hash {
        return Err(Error::HashMismatch {
            expected: header.hash.clone(),
            actual,
        });
    }
    let mut tensors = BTreeMap::new();
    for (name, e) in &header.tensors {
        if e.dtype != "f32" {
            return Err(Error::Format(format!("{name}: unsupported dtype {}", e.dtype)));
        }
        let count: usize = e.shape.iter().product();
        if e.shape.is_empty() || count == 0 || e.length != count * 4 {
            return Err(Error::Format(format!(
                "{name}: shape {:?} inconsistent with byte length {}",
                e.shape, e.length
            )));
        }
        let end = e
            .offset
            .checked_add(e.length)
            .filter(|&end| end <= blob.len())
            .ok_or_else(|| Error::Format(format!("{name}: range past end of blob")))?;
        let data = blob[e.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(e.shape.clone(), data)
            .map_err(|err| Error::Format(format!("{name}: {err}")))?;
        tensors.insert(name.clone(), t);
    }
    Ok((header, tensors))
}

pub fn save_weights(weights: &ModelWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let named = weights.named_tensors();
    let bytes = write_container(Some(*weights.config()), &named);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    weights_from_bytes(&bytes)
}

pub(crate) fn weights_from_bytes(bytes: &[u8]) -> Result<ModelWeights> {
    let (header, mut tensors) = read_container(bytes)?;
    let config = header
        .config
        .ok_or_else(|| Error::Format("header has no model config".into()))?;
    config.validate()?;
    let layout = tensor_layout(&config);
    if tensors.len() != layout.len() {
        return Err(Error::Format(format!(
            "expected {} tensors for config, found {}",
            layout.len(),
            tensors.len()
        )));
    }
    let ordered = layout
        .iter()
        .map(|(name, _)| {
            tensors
                .remove(name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))
        })
        .collect::<Result<Vec<_>>>()?;
    ModelWeights::from_tensors(config, ordered).map_err(|e| Error::Format(e.to_string()))
}
