//! On-disk trajectory container: a text header followed by raw frames.
//!
//! ```text
//! PDEFORGE-TRAJECTORY
//! version: 1
//! equation: ks
//! equation_id: 4
//! params:
//! n: 64
//! extent: 64
//! dtype: f32le
//! frames: 30
//! channels: 1
//! payload_bytes: 31457280
//! END-HEADER
//! <payload>
//! ```
//!
//! Every header line is `key: value`; unknown keys are kept in `extra`.
//! `params` is a comma-separated list. The payload is little-endian, ordered
//! frame-major, then channel, then row-major `[x][y][z]`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Seek, Write};
use std::path::Path;

use thiserror::Error;

use crate::pde::EquationKind;
use crate::real::Real;
use crate::spectral::{Field, Grid3};

pub const CONTAINER_MAGIC: &str = "PDEFORGE-TRAJECTORY";
pub const CONTAINER_SENTINEL: &str = "END-HEADER";
pub const CONTAINER_VERSION: u32 = 1;
const MAX_HEADER_LINES: usize = 256;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a trajectory container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("payload is {actual} bytes, header declares {declared}")]
    Length { declared: u64, actual: u64 },
    #[error("frames do not match the header shape")]
    Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerHeader {
    pub version: u32,
    pub equation: EquationKind,
    pub params: Vec<f64>,
    pub n: usize,
    pub extent: f64,
    /// `"f32le"` or `"f64le"`.
    pub dtype: String,
    pub frames: usize,
    pub channels: usize,
    pub extra: BTreeMap<String, String>,
}

impl ContainerHeader {
    pub fn new(
        equation: EquationKind,
        params: Vec<f64>,
        grid: Grid3,
        dtype: &str,
        frames: usize,
        channels: usize,
    ) -> Self {
        Self {
            version: CONTAINER_VERSION,
            equation,
            params,
            n: grid.n(),
            extent: grid.extent(),
            dtype: dtype.to_string(),
            frames,
            channels,
            extra: BTreeMap::new(),
        }
    }

    pub fn grid(&self) -> Result<Grid3, ContainerError> {
        Grid3::new(self.n, self.extent).map_err(|e| ContainerError::Header(e.to_string()))
    }

    pub fn dtype_bytes(&self) -> Result<usize, ContainerError> {
        match self.dtype.as_str() {
            "f32le" => Ok(4),
            "f64le" => Ok(8),
            other => Err(ContainerError::Header(format!("unknown dtype '{other}'"))),
        }
    }

    pub fn payload_bytes(&self) -> Result<u64, ContainerError> {
        Ok((self.frames * self.channels * self.n.pow(3) * self.dtype_bytes()?) as u64)
    }

    fn render(&self) -> Result<String, ContainerError> {
        let params: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
        let mut s = format!("{CONTAINER_MAGIC}\n");
        let mut line = |k: &str, v: String| s.push_str(&format!("{k}: {v}\n"));
        line("version", self.version.to_string());
        line("equation", self.equation.name().to_string());
        line("equation_id", self.equation.id().to_string());
        line("params", params.join(","));
        line("n", self.n.to_string());
        line("extent", self.extent.to_string());
        line("dtype", self.dtype.clone());
        line("frames", self.frames.to_string());
        line("channels", self.channels.to_string());
        line("payload_bytes", self.payload_bytes()?.to_string());
        for (k, v) in &self.extra {
            if k.contains(':') || k.contains('\n') || v.contains('\n') {
                return Err(ContainerError::Header(format!("extra entry '{k}' not representable")));
            }
            line(k, v.clone());
        }
        s.push_str(CONTAINER_SENTINEL);
        s.push('\n');
        Ok(s)
    }
}

fn parse<T: std::str::FromStr>(fields: &BTreeMap<String, String>, key: &str) -> Result<T, ContainerError> {
    let v = fields.get(key).ok_or_else(|| ContainerError::Header(format!("missing '{key}'")))?;
    v.parse().map_err(|_| ContainerError::Header(format!("bad value for '{key}': {v}")))
}

/// Reads the header and leaves `reader` positioned at the payload.
pub fn read_header<R: BufRead>(reader: &mut R) -> Result<(ContainerHeader, u64), ContainerError> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != CONTAINER_MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let mut fields = BTreeMap::new();
    let mut terminated = false;
    for _ in 0..MAX_HEADER_LINES {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let l = line.trim_end_matches('\n');
        if l == CONTAINER_SENTINEL {
            terminated = true;
            break;
        }
        let (k, v) =
            l.split_once(": ").or_else(|| l.split_once(':')).ok_or_else(|| ContainerError::Header(l.to_string()))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    if !terminated {
        return Err(ContainerError::Header("missing end-of-header sentinel".into()));
    }
    let version: u32 = parse(&fields, "version")?;
    if version != CONTAINER_VERSION {
        return Err(ContainerError::Version(version));
    }
    let equation: EquationKind = fields
        .get("equation")
        .ok_or_else(|| ContainerError::Header("missing 'equation'".into()))?
        .parse()
        .map_err(|e: crate::pde::CatalogError| ContainerError::Header(e.to_string()))?;
    let params = match fields.get("params").map(String::as_str) {
        None | Some("") => Vec::new(),
        Some(list) => list
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| ContainerError::Header(format!("bad param '{p}'"))))
            .collect::<Result<_, _>>()?,
    };
    let declared: u64 = parse(&fields, "payload_bytes")?;
    let header = ContainerHeader {
        version,
        equation,
        params,
        n: parse(&fields, "n")?,
        extent: parse(&fields, "extent")?,
        dtype: parse(&fields, "dtype")?,
        frames: parse(&fields, "frames")?,
        channels: parse(&fields, "channels")?,
        extra: fields
            .into_iter()
            .filter(|(k, _)| {
                !matches!(
                    k.as_str(),
                    "version"
                        | "equation"
                        | "equation_id"
                        | "params"
                        | "n"
                        | "extent"
                        | "dtype"
                        | "frames"
                        | "channels"
                        | "payload_bytes"
                )
            })
            .collect(),
    };
    header.grid()?;
    if header.payload_bytes()? != declared {
        return Err(ContainerError::Header(format!("payload_bytes {declared} disagrees with the declared shape")));
    }
    Ok((header, declared))
}

/// Parses only the header of a container file and checks the file size.
pub fn inspect(path: &Path) -> Result<ContainerHeader, ContainerError> {
    let file = File::open(path)?;
    let total = file.metadata()?.len();
    let mut reader = BufReader::new(file);
    let (header, declared) = read_header(&mut reader)?;
    let actual = total - reader.stream_position()?;
    if actual != declared {
        return Err(ContainerError::Length { declared, actual });
    }
    Ok(header)
}

pub fn write_container<T: Real>(
    path: &Path,
    header: &ContainerHeader,
    frames: &[Field<T>],
) -> Result<(), ContainerError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_container_to(&mut w, header, frames)?;
    w.flush()?;
    Ok(())
}

pub fn write_container_to<T: Real, W: Write>(
    w: &mut W,
    header: &ContainerHeader,
    frames: &[Field<T>],
) -> Result<(), ContainerError> {
    let grid = header.grid()?;
    if frames.len() != header.frames || frames.iter().any(|f| *f.grid() != grid || f.channels() != header.channels) {
        return Err(ContainerError::Shape);
    }
    let wide = header.dtype_bytes()? == 8;
    w.write_all(header.render()?.as_bytes())?;
    let mut buf = Vec::with_capacity(grid.len() * 8);
    for f in frames {
        for chunk in f.data().chunks(grid.len()) {
            buf.clear();
            for &v in chunk {
                if wide {
                    buf.extend_from_slice(&v.as_f64().to_le_bytes());
                } else {
                    buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
                }
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

/// Reads every frame, converting from the stored dtype to `T`.
pub fn read_container<T: Real>(path: &Path) -> Result<(ContainerHeader, Vec<Field<T>>), ContainerError> {
    read_container_from(&mut BufReader::new(File::open(path)?))
}

pub fn read_container_from<T: Real, R: BufRead>(
    reader: &mut R,
) -> Result<(ContainerHeader, Vec<Field<T>>), ContainerError> {
    let (header, declared) = read_header(reader)?;
    let grid = header.grid()?;
    let width = header.dtype_bytes()?;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() as u64 != declared {
        return Err(ContainerError::Length { declared, actual: payload.len() as u64 });
    }
    let per_frame = header.channels * grid.len();
    let values: Vec<T> = payload
        .chunks_exact(width)
        .map(|b| {
            if width == 8 {
                T::of(f64::from_le_bytes(b.try_into().unwrap()))
            } else {
                T::of(f32::from_le_bytes(b.try_into().unwrap()) as f64)
            }
        })
        .collect();
    let frames = values
        .chunks_exact(per_frame.max(1))
        .take(header.frames)
        .map(|c| Field::from_vec(grid, header.channels, c.to_vec()).map_err(|_| ContainerError::Shape))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((header, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (ContainerHeader, Vec<Field<f32>>) {
        let g = Grid3::new(4, 2.0).unwrap();
        let frames: Vec<Field<f32>> =
            (0..3).map(|t| Field::from_fn(g, 2, |c, x, y, z| t as f64 + c as f64 * 0.5 + x - y * z)).collect();
        let mut h = ContainerHeader::new(EquationKind::FisherKpp, vec![0.001, 12.5], g, "f32le", 3, 2);
        h.extra.insert("seed".into(), "7".into());
        (h, frames)
    }

    #[test]
    fn round_trip_in_memory() {
        let (h, frames) = sample();
        let mut bytes = Vec::new();
        write_container_to(&mut bytes, &h, &frames).unwrap();
        let (h2, f2) = read_container_from::<f32, _>(&mut &bytes[..]).unwrap();
        assert_eq!(h2, h);
        assert_eq!(f2, frames);
    }

    #[test]
    fn file_round_trip_and_inspect() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.tdp");
        let (mut h, frames) = sample();
        h.dtype = "f64le".into();
        write_container(&p, &h, &frames).unwrap();
        assert_eq!(inspect(&p).unwrap(), h);
        let (_, back) = read_container::<f64>(&p).unwrap();
        assert_eq!(back[2].data()[5], frames[2].data()[5] as f64);

        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(inspect(&p), Err(ContainerError::Length { .. })));
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(read_container_from::<f32, _>(&mut &b"nope\n"[..]), Err(ContainerError::BadMagic)));
        let text = format!("{CONTAINER_MAGIC}\nversion: 1\n");
        assert!(matches!(read_container_from::<f32, _>(&mut text.as_bytes()), Err(ContainerError::Header(_))));
        let (mut h, frames) = sample();
        h.frames = 2;
        assert!(matches!(write_container_to(&mut Vec::new(), &h, &frames), Err(ContainerError::Shape)));
    }
}
