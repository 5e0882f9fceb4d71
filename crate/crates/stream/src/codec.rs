//! Binary framing of a [`FrameSample`]. All integers are little-endian.
//!
//! ```text
//! offset      size   field
//! 0           4      magic "TDPL"
//! 4           2      version (u16)
//! 6           2      flags (u16), bit 0 = normalized payload
//! 8           1      equation id
//! 9           1      initializer id
//! 10          2      resolution n (u16)
//! 12          2      run index (u16)
//! 14          2      frame index (u16)
//! 16          1      channel index
//! 17          1      canonical (0 or 1)
//! 18          1      param count p
//! 19          4p     params (f32): PDE params, then initializer params
//! 19+4p       6      dims (3 x u16)
//! 25+4p       1      dtype (0 = f32)
//! 26+4p       4      payload length in bytes (u32)
//! 30+4p       4      CRC-32 of the payload (u32)
//! 34+4p       ..     payload, row-major [x][y][z]
//! ```

use std::io::{self, Read, Write};

use pdeforge::generation::{FrameMetadata, FrameSample};
use pdeforge::ic::InitializerConfig;
use pdeforge::pde::EquationKind;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"TDPL";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
pub const FLAG_NORMALIZED: u16 = 1;
/// Largest accepted payload (1 GiB); guards allocations on corrupt headers.
pub const MAX_PAYLOAD: u32 = 1 << 30;
const PREFIX_LEN: usize = 19;
const SUFFIX_LEN: usize = 15;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u16),
    #[error("payload checksum mismatch (header {expected:08x}, payload {actual:08x})")]
    Checksum { expected: u32, actual: u32 },
    #[error("message truncated")]
    Truncated,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("declared payload of {0} bytes exceeds the limit")]
    Oversized(u32),
    #[error(transparent)]
    Io(io::Error),
}

impl ProtocolError {
    /// Errors after which the byte stream is still aligned on a message boundary.
    pub fn is_recoverable(&self) -> bool {
        matches!(self, ProtocolError::Checksum { .. } | ProtocolError::Malformed(_))
    }
}

impl From<io::Error> for ProtocolError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ProtocolError::Truncated
        } else {
            ProtocolError::Io(e)
        }
    }
}

fn malformed(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::Malformed(msg.into())
}

/// Size of the encoded message for `sample`.
pub fn encoded_len(sample: &FrameSample) -> usize {
    PREFIX_LEN
        + 4 * (sample.meta.pde_params.len() + sample.meta.ic_params.len())
        + SUFFIX_LEN
        + 4 * sample.payload.len()
}

pub fn encode(sample: &FrameSample) -> Result<Vec<u8>, ProtocolError> {
    let mut out = Vec::with_capacity(encoded_len(sample));
    encode_into(sample, &mut out)?;
    Ok(out)
}

pub fn encode_into(sample: &FrameSample, out: &mut Vec<u8>) -> Result<(), ProtocolError> {
    let m = &sample.meta;
    if !sample.is_well_formed() {
        return Err(malformed(format!("payload has {} voxels, dims {:?}", sample.payload.len(), sample.dims)));
    }
    let count = m.pde_params.len() + m.ic_params.len();
    let count = u8::try_from(count).map_err(|_| malformed("too many params"))?;
    let bytes = u32::try_from(sample.payload.len() * 4)
        .ok()
        .filter(|&b| b <= MAX_PAYLOAD)
        .ok_or_else(|| malformed("payload too large"))?;

    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let flags = if m.normalized { FLAG_NORMALIZED } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.push(m.equation.id());
    out.push(m.initializer.id());
    out.extend_from_slice(&m.resolution.to_le_bytes());
    out.extend_from_slice(&m.run.to_le_bytes());
    out.extend_from_slice(&m.frame.to_le_bytes());
    out.push(m.channel);
    out.push(m.canonical as u8);
    out.push(count);
    for p in m.pde_params.iter().chain(&m.ic_params) {
        out.extend_from_slice(&p.to_le_bytes());
    }
    for d in sample.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.push(DTYPE_F32);
    out.extend_from_slice(&bytes.to_le_bytes());
    let start = out.len() + 4;
    out.extend_from_slice(&[0; 4]);
    out.reserve(bytes as usize);
    for v in &sample.payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[start..]);
    out[start - 4..start].copy_from_slice(&crc.to_le_bytes());
    Ok(())
}

pub fn write_message<W: Write>(w: &mut W, sample: &FrameSample) -> Result<(), ProtocolError> {
    w.write_all(&encode(sample)?).map_err(ProtocolError::Io)
}

/// Decodes exactly one message occupying all of `bytes`.
pub fn decode(bytes: &[u8]) -> Result<FrameSample, ProtocolError> {
    let mut cursor = bytes;
    let sample = decode_from(&mut cursor)?.ok_or(ProtocolError::Truncated)?;
    if !cursor.is_empty() {
        return Err(malformed(format!("{} trailing bytes", cursor.len())));
    }
    Ok(sample)
}

struct Header {
    meta: FrameMetadata,
    dims: [u16; 3],
    crc: u32,
}

/// Reads one message. `Ok(None)` on a clean end of stream before any byte.
///
/// On [`ProtocolError::Checksum`] and [`ProtocolError::Malformed`] the whole
/// message has been consumed, so the stream stays aligned.
pub fn decode_from<R: Read>(r: &mut R) -> Result<Option<FrameSample>, ProtocolError> {
    let mut prefix = [0u8; PREFIX_LEN];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut prefix[filled..4]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(ProtocolError::Truncated),
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let magic: [u8; 4] = prefix[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    r.read_exact(&mut prefix[4..6])?;
    let version = u16::from_le_bytes([prefix[4], prefix[5]]);
    if version != VERSION {
        return Err(ProtocolError::UnsupportedVersion(version));
    }
    r.read_exact(&mut prefix[6..])?;
    let count = prefix[18] as usize;
    let mut rest = vec![0u8; 4 * count + SUFFIX_LEN];
    r.read_exact(&mut rest)?;

    let header = parse_header(&prefix, &rest, count);
    // consume the payload even for a bad header so the stream stays aligned
    let bytes = u32::from_le_bytes(rest[4 * count + 7..4 * count + 11].try_into().unwrap());
    if bytes > MAX_PAYLOAD {
        return Err(ProtocolError::Oversized(bytes));
    }
    let mut payload = vec![0u8; bytes as usize];
    r.read_exact(&mut payload)?;
    let header = header?;
    let actual = crc32fast::hash(&payload);
    if actual != header.crc {
        return Err(ProtocolError::Checksum { expected: header.crc, actual });
    }
    let voxels = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(Some(FrameSample { meta: header.meta, dims: header.dims, payload: voxels }))
}

fn parse_header(prefix: &[u8; PREFIX_LEN], rest: &[u8], count: usize) -> Result<Header, ProtocolError> {
    let u16_at = |b: &[u8], i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
    let flags = u16_at(prefix, 6);
    let equation = EquationKind::from_id(prefix[8]).map_err(|e| malformed(e.to_string()))?;
    let initializer = InitializerConfig::from_id(prefix[9]).map_err(|e| malformed(e.to_string()))?;
    let canonical = match prefix[17] {
        0 => false,
        1 => true,
        v => return Err(malformed(format!("canonical flag {v}"))),
    };
    let pde_count = equation.param_count();
    if count != pde_count + initializer.param_count() {
        return Err(malformed(format!("{count} params for {equation} with {initializer}")));
    }
    let params: Vec<f32> =
        rest[..4 * count].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let s = &rest[4 * count..];
    let dims = [u16_at(s, 0), u16_at(s, 2), u16_at(s, 4)];
    if s[6] != DTYPE_F32 {
        return Err(malformed(format!("dtype code {}", s[6])));
    }
    let bytes = u32::from_le_bytes(s[7..11].try_into().unwrap());
    let voxels: u64 = dims.iter().map(|&d| d as u64).product();
    if voxels * 4 != bytes as u64 {
        return Err(malformed(format!("payload length {bytes} does not match dims {dims:?}")));
    }
    let crc = u32::from_le_bytes(s[11..15].try_into().unwrap());
    let meta = FrameMetadata {
        equation,
        initializer,
        resolution: u16_at(prefix, 10),
        run: u16_at(prefix, 12),
        frame: u16_at(prefix, 14),
        channel: prefix[16],
        canonical,
        normalized: flags & FLAG_NORMALIZED != 0,
        pde_params: params[..pde_count].to_vec(),
        ic_params: params[pde_count..].to_vec(),
    };
    Ok(Header { meta, dims, crc })
}
