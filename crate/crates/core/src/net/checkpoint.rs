//! Single-file checkpoints: `DIFFNET\0`, a little-endian `u64` header length, a JSON header
//! (format version, network config, parameter names and shapes, free-form metadata), then
//! every parameter as little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiffusionNetParams, NetworkConfig};
use crate::autodiff::Tensor;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DIFFNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: NetworkConfig,
    parameters: Vec<ParamEntry>,
    #[serde(default)]
    metadata: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: DiffusionNetParams,
    pub metadata: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, params: &DiffusionNetParams, metadata: serde_json::Value) -> Result<()> {
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        config: params.config.clone(),
        parameters: params
            .iter()
            .map(|(name, t)| ParamEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        metadata,
    };
    let json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(16 + json.len() + 8 * params.n_scalars());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for (_, t) in params.iter() {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |m: &str| Error::Corrupt(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("not a checkpoint (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("eight bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| corrupt(&format!("header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(corrupt(&format!("unsupported format version {}", header.format_version)));
    }
    let mut pos = 16 + hlen;
    let mut entries = Vec::with_capacity(header.parameters.len());
    for p in header.parameters {
        let n: usize = p.shape.iter().product();
        let blob = bytes.get(pos..pos + 8 * n).ok_or_else(|| corrupt("truncated parameter data"))?;
        let data = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect();
        entries.push((p.name, Tensor::new(p.shape, data)?));
        pos += 8 * n;
    }
    if pos != bytes.len() {
        return Err(corrupt("trailing bytes after parameter data"));
    }
    Ok(Checkpoint {
        params: DiffusionNetParams::from_entries(header.config, entries)?,
        metadata: header.metadata,
    })
}
