//! Checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "EORWCKPT"
//! 8       4     format version, u32 little-endian (currently 1)
//! 12      8     header length H, u64 little-endian
//! 20      H     UTF-8 JSON header:
//!               {"config": ModelConfig,
//!                "vocab": [token, ...],           // id order
//!                "params": [{"name", "shape"}, ...]}
//! 20+H    ...   every parameter's values as f64 little-endian, row-major,
//!               in header order
//! ```
//!
//! The encoding holds no timestamps, so equal models give equal bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::RewriteModel;
use crate::autodiff::{ParamStore, Tensor};
use crate::corpus::Vocab;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EORWCKPT";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vec<String>,
    params: Vec<ParamEntry>,
}

pub fn to_bytes(model: &RewriteModel) -> Result<Vec<u8>> {
    let store = model.store();
    let header = Header {
        config: model.config().clone(),
        vocab: model.vocab().tokens().to_vec(),
        params: store
            .ids()
            .map(|id| ParamEntry {
                name: store.name(id).to_string(),
                shape: store.get(id).shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + store.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for id in store.ids() {
        for v in store.get(id).data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<RewriteModel> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version}, this build reads version {VERSION}"
        )));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let vocab = Vocab::from_tokens(header.vocab).map_err(Error::Checkpoint)?;
    let mut store = ParamStore::new();
    let mut at = 20 + hlen;
    for p in header.params {
        let n: usize = p.shape.iter().product();
        let raw = bytes
            .get(at..at + n * 8)
            .ok_or_else(|| Error::Checkpoint(format!("truncated data for `{}`", p.name)))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        store.add(p.name, Tensor::new(p.shape, data)?)?;
        at += n * 8;
    }
    if at != bytes.len() {
        return Err(bad("trailing bytes after parameter data"));
    }
    RewriteModel::from_parts(header.config, vocab, store)
}

pub fn save(model: &RewriteModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<RewriteModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
