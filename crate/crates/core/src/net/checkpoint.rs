use std::collections::HashMap;
use std::path::Path;

use candle_core::{Device, Tensor};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "interpose-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Metadata key holding the JSON-encoded header.
const HEADER_KEY: &str = "interpose";

/// Header stored in the safetensors metadata block of every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// `animator`, `generator` or `autoencoder`.
    pub kind: String,
    /// Model configuration as JSON.
    pub config: String,
    pub config_hash: String,
    pub seed: u64,
    pub toolkit_version: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: u32,
    #[serde(flatten)]
    meta: CheckpointMeta,
}

impl CheckpointMeta {
    // A single key keeps the header bytes stable: safetensors writes its
    // metadata map in hash order.
    fn to_map(&self) -> Result<HashMap<String, String>> {
        let header = Header {
            format: CHECKPOINT_FORMAT.into(),
            format_version: CHECKPOINT_VERSION,
            meta: self.clone(),
        };
        let json = serde_json::to_string(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(HashMap::from([(HEADER_KEY.to_string(), json)]))
    }

    fn from_map(map: &HashMap<String, String>) -> Result<Self> {
        let json = map
            .get(HEADER_KEY)
            .ok_or_else(|| Error::Checkpoint("not an interpose checkpoint".into()))?;
        let header: Header =
            serde_json::from_str(json).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint("not an interpose checkpoint".into()));
        }
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", header.format_version)));
        }
        Ok(header.meta)
    }
}

/// Writes all parameters plus the header as a safetensors file.
pub fn save_checkpoint(path: &Path, store: &ParamStore, meta: &CheckpointMeta) -> Result<()> {
    let tensors = store.to_tensors();
    let bytes = safetensors::tensor::serialize(tensors.iter().map(|(k, v)| (k.as_str(), v)), Some(meta.to_map()?))
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads the header and tensors of a checkpoint.
pub fn read_checkpoint(path: &Path) -> Result<(CheckpointMeta, HashMap<String, Tensor>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, metadata) =
        SafeTensors::read_metadata(&bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let header = metadata
        .metadata()
        .as_ref()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no header".into()))?;
    let meta = CheckpointMeta::from_map(header)?;
    let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?;
    Ok((meta, tensors))
}
