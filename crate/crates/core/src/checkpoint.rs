//! Versioned JSON checkpoints with bit-exact float round trips.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mstpn::{LayerConfig, StpnParams};
use crate::network::{AgentModel, TrainConfig};

pub const FORMAT_VERSION: u32 = 1;

pub trait Checkpointable: Serialize + DeserializeOwned {
    const FORMAT: &'static str;
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    payload: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub config: LayerConfig,
    pub params: StpnParams,
}

impl Checkpointable for LayerCheckpoint {
    const FORMAT: &'static str = "memstpn-layer";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub model: AgentModel,
    pub env_steps: u64,
    pub train: Option<TrainConfig>,
}

impl Checkpointable for AgentCheckpoint {
    const FORMAT: &'static str = "memstpn-agent";
}

pub fn to_json<T: Checkpointable>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(&Envelope {
        format: T::FORMAT.to_string(),
        version: FORMAT_VERSION,
        payload: value,
    })?)
}

pub fn from_json<T: Checkpointable>(text: &str) -> Result<T> {
    let header: Header = serde_json::from_str(text)?;
    if header.format != T::FORMAT {
        return Err(Error::InvalidData(format!(
            "checkpoint format {:?}, expected {:?}",
            header.format,
            T::FORMAT
        )));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::InvalidData(format!(
            "checkpoint version {} is not supported (expected {FORMAT_VERSION})",
            header.version
        )));
    }
    let env: Envelope<T> = serde_json::from_str(text)?;
    Ok(env.payload)
}

pub fn save<T: Checkpointable>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: Checkpointable>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
