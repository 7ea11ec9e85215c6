use std::fs;
use std::path::Path;

use super::{Spectrogram, SpectrogramKind};
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const CACHE_MAGIC: &[u8; 4] = b"TKSP";
pub const CACHE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4 + 8 + 4;

pub fn encode_cache(spec: &Spectrogram) -> Vec<u8> {
    let (f, t) = spec.values.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * f * t);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.push(spec.kind.code());
    out.extend_from_slice(&(f as u32).to_le_bytes());
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&spec.frame_duration.to_le_bytes());
    out.extend_from_slice(&spec.sample_rate.to_le_bytes());
    for v in spec.values.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_cache(bytes: &[u8]) -> Result<Spectrogram> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corrupt(format!("spectrogram cache of {} bytes has no header", bytes.len())));
    }
    if &bytes[..4] != CACHE_MAGIC {
        return Err(Error::Corrupt("bad spectrogram cache magic".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CACHE_VERSION {
        return Err(Error::Corrupt(format!("unsupported spectrogram cache version {version}")));
    }
    let kind = SpectrogramKind::from_code(bytes[6])
        .ok_or_else(|| Error::Corrupt(format!("unknown spectrogram kind {}", bytes[6])))?;
    let f = u32_at(7) as usize;
    let t = u32_at(11) as usize;
    let frame_duration = f64::from_le_bytes(bytes[15..23].try_into().unwrap());
    let sample_rate = u32_at(23);
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * f * t {
        return Err(Error::Corrupt(format!(
            "{f}x{t} spectrogram needs {} payload bytes, found {}",
            4 * f * t,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Spectrogram {
        values: Grid::new(f, t, values)?,
        kind,
        frame_duration,
        sample_rate,
    })
}

pub fn write_cache(path: impl AsRef<Path>, spec: &Spectrogram) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_cache(spec)).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    decode_cache(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
