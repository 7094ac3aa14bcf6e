//! Binary container shared by dataset and checkpoint files: magic bytes,
//! a little-endian `u64` header length, a JSON header, then the payload.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub fn encode<H: Serialize>(magic: &[u8], header: &H, payload: &[u8]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header).map_err(|e| Error::json("<header>", e))?;
    let mut out = Vec::with_capacity(magic.len() + 8 + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(payload);
    Ok(out)
}

/// Header and payload of a container; `path` only labels errors.
pub fn decode<'a, H: DeserializeOwned>(magic: &[u8], bytes: &'a [u8], path: &Path) -> Result<(H, &'a [u8])> {
    let rest = bytes
        .strip_prefix(magic)
        .ok_or_else(|| Error::format(path, format!("missing magic {:?}", String::from_utf8_lossy(magic))))?;
    if rest.len() < 8 {
        return Err(Error::format(path, "truncated header length"));
    }
    let (len, rest) = rest.split_at(8);
    let len = u64::from_le_bytes(len.try_into().expect("8 bytes")) as usize;
    if rest.len() < len {
        return Err(Error::format(path, "truncated header"));
    }
    let (header, payload) = rest.split_at(len);
    let header = serde_json::from_slice(header).map_err(|e| Error::json(path, e))?;
    Ok((header, payload))
}
