//! Portable weights on disk: a JSON index plus one raw little-endian `f32`
//! blob. Offsets are byte offsets into the blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::model::WeightSet;
use crate::tensor::{numel, Tensor};

pub const DEFAULT_BLOB: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortableEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
    pub byte_length: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortableIndex {
    /// Blob file name, relative to the index file.
    #[serde(default = "default_blob")]
    pub data_file: String,
    pub tensors: Vec<PortableEntry>,
}

fn default_blob() -> String {
    DEFAULT_BLOB.to_string()
}

/// Serializes weights into an index and blob bytes.
pub fn encode(weights: &WeightSet) -> (PortableIndex, Vec<u8>) {
    let mut blob = Vec::with_capacity(weights.total_params() * 4);
    let tensors = weights
        .iter()
        .map(|(name, t)| {
            let byte_offset = blob.len() as u64;
            blob.extend(t.data().iter().flat_map(|v| v.to_le_bytes()));
            PortableEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                dtype: "f32".into(),
                byte_offset,
                byte_length: blob.len() as u64 - byte_offset,
            }
        })
        .collect();
    (
        PortableIndex {
            data_file: default_blob(),
            tensors,
        },
        blob,
    )
}

pub fn decode(index: &PortableIndex, blob: &[u8]) -> Result<WeightSet, FormatError> {
    let mut weights = WeightSet::new();
    for entry in &index.tensors {
        if entry.dtype != "f32" {
            return Err(FormatError::Manifest(format!(
                "tensor {}: unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let expected = numel(&entry.shape) as u64 * 4;
        if entry.byte_length != expected {
            return Err(FormatError::Manifest(format!(
                "tensor {}: byte_length {} does not match shape {:?}",
                entry.name, entry.byte_length, entry.shape
            )));
        }
        let start = entry.byte_offset as usize;
        let bytes = blob
            .get(start..start + expected as usize)
            .ok_or_else(|| FormatError::Manifest(format!("tensor {} extends past end of blob", entry.name)))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(entry.shape.clone(), data)?;
        if weights.insert(entry.name.clone(), tensor).is_some() {
            return Err(FormatError::Manifest(format!("duplicate tensor {}", entry.name)));
        }
    }
    Ok(weights)
}

/// Writes `index_path` and the blob next to it. Returns the blob path.
pub fn write(index_path: &Path, weights: &WeightSet) -> Result<PathBuf, FormatError> {
    let (index, blob) = encode(weights);
    let blob_path = sibling(index_path, &index.data_file);
    fs::write(&blob_path, blob)?;
    fs::write(index_path, serde_json::to_vec_pretty(&index)?)?;
    Ok(blob_path)
}

pub fn read(index_path: &Path) -> Result<WeightSet, FormatError> {
    let index: PortableIndex = serde_json::from_slice(&fs::read(index_path)?)?;
    let blob = fs::read(sibling(index_path, &index.data_file))?;
    decode(&index, &blob)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}
