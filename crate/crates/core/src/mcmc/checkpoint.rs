//! Self-describing binary container for sampler state.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SVJCKPT\0"
//! 8       4     format version, u32 little-endian
//! 12      1     payload kind (1 = chain state, 2 = posterior draws)
//! 13      3     reserved, zero
//! 16      32    SHA-256 of the run configuration and panel
//! 48      8     payload length n, u64 little-endian
//! 56      n     payload, UTF-8 JSON with round-trip float formatting
//! 56+n    32    SHA-256 of bytes 0..56+n
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"SVJCKPT\0";
pub const VERSION: u32 = 1;
const HEADER: usize = 56;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    Chain = 1,
    Draws = 2,
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn encode(kind: PayloadKind, config_hash: [u8; 32], payload: &[u8]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER + payload.len() + 32);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(kind as u8);
    buf.extend_from_slice(&[0; 3]);
    buf.extend_from_slice(&config_hash);
    buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    buf.extend_from_slice(payload);
    let digest = sha256(&buf);
    buf.extend_from_slice(&digest);
    buf
}

/// Validates a container and returns its payload.
pub fn decode(bytes: &[u8], kind: PayloadKind, config_hash: Option<[u8; 32]>) -> Result<&[u8]> {
    let bad = |m: &str| Err(Error::Checkpoint(m.to_string()));
    if bytes.len() < HEADER + 32 {
        return bad("file too short");
    }
    if bytes[..8] != MAGIC {
        return bad("bad magic");
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    if bytes[12] != kind as u8 {
        return Err(Error::Checkpoint(format!("payload kind {} where {} expected", bytes[12], kind as u8)));
    }
    let len = u64::from_le_bytes(bytes[48..56].try_into().expect("8 bytes")) as usize;
    if bytes.len() != HEADER + len + 32 {
        return bad("length field does not match file size");
    }
    let body = &bytes[..HEADER + len];
    if sha256(body)[..] != bytes[HEADER + len..] {
        return bad("checksum mismatch");
    }
    if let Some(h) = config_hash {
        if bytes[16..48] != h {
            return bad("configuration or panel differs from the checkpointed run");
        }
    }
    Ok(&bytes[HEADER..HEADER + len])
}

/// Writes through a temporary file and renames, so a crash never leaves a
/// truncated checkpoint behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
