//! The bit-exact VPDE container format.
//!
//! Layout: 4 magic bytes `VPDE`, a little-endian `u16` version, a
//! `u32`-length-prefixed UTF-8 JSON header, then the raw little-endian
//! payload. Field videos use `f32le` payloads; model checkpoints reuse the
//! same framing with an `f64le` payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VpdeError};
use crate::fields::{Family, FieldVideo};

pub const MAGIC: [u8; 4] = *b"VPDE";
pub const VERSION: u16 = 1;

/// JSON metadata carried in the container header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub dims: [usize; 4],
    pub dtype: String,
    pub dt: f64,
    pub dx: f64,
    pub family: String,
    pub seed: u64,
}

/// Write a raw container: header plus payload bytes.
pub fn write_raw(path: &Path, header: &ContainerHeader, payload: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let json = serde_json::to_vec(header)?;
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// Read a raw container, validating magic and version but not payload size.
pub fn read_raw(path: &Path) -> Result<(ContainerHeader, Vec<u8>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(VpdeError::BadMagic(magic));
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != VERSION {
        return Err(VpdeError::VersionUnsupported(version));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let hlen = u32::from_le_bytes(buf4) as usize;
    let mut hbytes = vec![0u8; hlen];
    r.read_exact(&mut hbytes)?;
    let header: ContainerHeader = serde_json::from_slice(&hbytes)
        .map_err(|e| VpdeError::BadHeader(e.to_string()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    Ok((header, payload))
}

/// Same framing as [`write_raw`] but with an arbitrary JSON header type,
/// used by checkpoint files.
pub fn write_raw_json<H: Serialize>(path: &Path, header: &H, payload: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let json = serde_json::to_vec(header)?;
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_raw_json`].
pub fn read_raw_json<H: serde::de::DeserializeOwned>(path: &Path) -> Result<(H, Vec<u8>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(VpdeError::BadMagic(magic));
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != VERSION {
        return Err(VpdeError::VersionUnsupported(version));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let hlen = u32::from_le_bytes(buf4) as usize;
    let mut hbytes = vec![0u8; hlen];
    r.read_exact(&mut hbytes)?;
    let header: H = serde_json::from_slice(&hbytes)
        .map_err(|e| VpdeError::BadHeader(e.to_string()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    Ok((header, payload))
}

/// Write a field video. Payload is T-major, then H, W, C, f32 little-endian.
pub fn write_container(path: &Path, x: &FieldVideo) -> Result<()> {
    let (t, h, w, c) = x.dims();
    let header = ContainerHeader {
        dims: [t, h, w, c],
        dtype: "f32le".into(),
        dt: x.dt,
        dx: x.dx,
        family: x.family.as_str().into(),
        seed: x.seed,
    };
    let mut payload = Vec::with_capacity(4 * t * h * w * c);
    for &v in x.data().iter() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_raw(path, &header, &payload)
}

/// Read a field video back; the inverse of [`write_container`] bit-exactly.
pub fn read_container(path: &Path) -> Result<FieldVideo> {
    let (header, payload) = read_raw(path)?;
    if header.dtype != "f32le" {
        return Err(VpdeError::BadHeader(format!(
            "expected dtype f32le, got {}",
            header.dtype
        )));
    }
    let [t, h, w, c] = header.dims;
    let expected = 4 * t * h * w * c;
    if payload.len() != expected {
        return Err(VpdeError::PayloadLengthMismatch { expected, got: payload.len() });
    }
    let family = Family::parse(&header.family)
        .ok_or_else(|| VpdeError::BadHeader(format!("unknown family {}", header.family)))?;
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let data = Array4::from_shape_vec((t, h, w, c), floats)
        .map_err(|e| VpdeError::BadHeader(e.to_string()))?;
    FieldVideo::new(data, header.dt, header.dx, family, header.seed)
}

/// Encode a slice of f64 as a little-endian byte payload (checkpoints).
pub fn f64_payload(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * values.len());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decode an `f64le` payload.
pub fn f64_from_payload(payload: &[u8]) -> Result<Vec<f64>> {
    if payload.len() % 8 != 0 {
        return Err(VpdeError::PayloadLengthMismatch {
            expected: payload.len() / 8 * 8,
            got: payload.len(),
        });
    }
    Ok(payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
        .collect())
}
