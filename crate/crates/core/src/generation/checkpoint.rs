//! Checkpoint container: a fixed 16-byte header followed by a JSON body.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TDCK"
//! 4       2     format version (u16 LE)
//! 6       2     reserved, zero
//! 8       4     body length in bytes (u32 LE)
//! 12      4     CRC-32 (IEEE) of the body (u32 LE)
//! 16      ..    body: ServerState as UTF-8 JSON
//! ```

use thiserror::Error;

use super::ServerState;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TDCK";
pub const CHECKPOINT_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("checkpoint truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("checkpoint checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("checkpoint body: {0}")]
    Body(#[from] serde_json::Error),
    #[error("checkpoint uses rng '{0}', this build provides '{1}'")]
    Rng(String, String),
    #[error("checkpoint holds an invalid config: {0}")]
    Config(String),
    #[error("checkpoint body too large")]
    TooLarge,
}

pub fn encode_checkpoint(state: &ServerState) -> Result<Vec<u8>, CheckpointError> {
    let body = serde_json::to_vec(state)?;
    let len = u32::try_from(body.len()).map_err(|_| CheckpointError::TooLarge)?;
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ServerState, CheckpointError> {
    if bytes.len() < 4 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Truncated { needed: HEADER_LEN, have: bytes.len() });
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = u16_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let len = u32_at(8) as usize;
    let stored = u32_at(12);
    let needed = HEADER_LEN + len;
    if bytes.len() < needed {
        return Err(CheckpointError::Truncated { needed, have: bytes.len() });
    }
    let body = &bytes[HEADER_LEN..needed];
    let computed = crc32fast::hash(body);
    if computed != stored {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    let state: ServerState = serde_json::from_slice(body)?;
    if state.rng_algorithm != super::RNG_ALGORITHM {
        return Err(CheckpointError::Rng(state.rng_algorithm, super::RNG_ALGORITHM.to_string()));
    }
    Ok(state)
}
