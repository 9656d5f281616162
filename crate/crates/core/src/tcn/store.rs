//! Versioned binary parameter file.
//!
//! Layout, all integers little-endian:
//! `b"OOTCN\0"`, `u16` version, `u32` config length, config as JSON,
//! `u64` value count, values as `f64`.

use std::io::{Read, Write};
use std::path::Path;

use super::network::{NetworkConfig, NetworkParams};
use super::TcnError;

pub const PARAMS_MAGIC: &[u8; 6] = b"OOTCN\0";
pub const PARAMS_VERSION: u16 = 1;

pub fn write_params(path: impl AsRef<Path>, params: &NetworkParams) -> Result<(), TcnError> {
    let config = serde_json::to_vec(&params.config).map_err(|e| TcnError::Format(e.to_string()))?;
    let mut buf = Vec::with_capacity(32 + config.len() + 8 * params.values.len());
    buf.extend_from_slice(PARAMS_MAGIC);
    buf.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config);
    buf.extend_from_slice(&(params.values.len() as u64).to_le_bytes());
    for v in &params.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_params(path: impl AsRef<Path>) -> Result<NetworkParams, TcnError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<NetworkParams, TcnError> {
    let bad = |m: &str| TcnError::Format(m.to_string());
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8], TcnError> {
        let s = bytes.get(at..at + n).ok_or_else(|| bad("truncated"))?;
        at += n;
        Ok(s)
    };
    if take(6)? != PARAMS_MAGIC {
        return Err(bad("not a parameter file"));
    }
    let version = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes"));
    if version != PARAMS_VERSION {
        return Err(TcnError::Format(format!("unsupported version {version}")));
    }
    let clen = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let config: NetworkConfig =
        serde_json::from_slice(take(clen)?).map_err(|e| TcnError::Format(format!("config: {e}")))?;
    let n = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let raw = take(n.checked_mul(8).ok_or_else(|| bad("value count overflow"))?)?;
    let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    config.validate()?;
    if config.layout().total != values.len() {
        return Err(bad("value count does not match the embedded config"));
    }
    Ok(NetworkParams { config, values })
}
