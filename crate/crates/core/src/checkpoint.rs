//! Binary checkpoints: `FISG`, a little-endian u32 version, the config as
//! length-prefixed JSON, then the length-prefixed bincode training state.

use std::fs;
use std::path::Path;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::gan::TrainState;

pub const MAGIC: &[u8; 4] = b"FISG";
pub const VERSION: u32 = 1;

pub fn encode(config: &TrainConfig, state: &TrainState) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(config).map_err(|e| Error::Config(e.to_string()))?;
    let body = bincode::serialize(state).map_err(|e| Error::State(format!("cannot encode state: {e}")))?;
    let mut out = Vec::with_capacity(24 + json.len() + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

fn take<'b>(bytes: &'b [u8], at: &mut usize, len: usize, what: &str) -> Result<&'b [u8]> {
    let chunk = bytes
        .get(*at..at.saturating_add(len))
        .ok_or_else(|| Error::format(*at as u64, format!("truncated checkpoint reading {what}")))?;
    *at += len;
    Ok(chunk)
}

fn take_len(bytes: &[u8], at: &mut usize, what: &str) -> Result<usize> {
    let b = take(bytes, at, 8, what)?;
    Ok(u64::from_le_bytes(b.try_into().expect("eight bytes")) as usize)
}

pub fn decode(bytes: &[u8]) -> Result<(TrainConfig, TrainState)> {
    let mut at = 0;
    if take(bytes, &mut at, 4, "magic")? != MAGIC {
        return Err(Error::format(0, "not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(take(bytes, &mut at, 4, "version")?.try_into().expect("four bytes"));
    if version != VERSION {
        return Err(Error::format(4, format!("checkpoint version {version}, expected {VERSION}")));
    }
    let n = take_len(bytes, &mut at, "config length")?;
    let start = at;
    let config: TrainConfig = serde_json::from_slice(take(bytes, &mut at, n, "config")?)
        .map_err(|e| Error::format(start as u64, format!("bad config echo: {e}")))?;
    let n = take_len(bytes, &mut at, "state length")?;
    let start = at;
    let state: TrainState = bincode::deserialize(take(bytes, &mut at, n, "state")?)
        .map_err(|e| Error::format(start as u64, format!("bad state payload: {e}")))?;
    if at != bytes.len() {
        return Err(Error::format(at as u64, "trailing bytes after checkpoint"));
    }
    Ok((config, state))
}

pub fn save(path: &Path, config: &TrainConfig, state: &TrainState) -> Result<()> {
    fs::write(path, encode(config, state)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(TrainConfig, TrainState)> {
    decode(&fs::read(path)?)
}
