use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"TKWT";
const WEIGHTS_VERSION: u16 = 1;

/// Layout: magic, u16 version, u32-prefixed config text, u32 blob count,
/// per blob a u32 length and its little-endian f32 values, CRC32 of all
/// preceding bytes.
pub fn encode_weights(model: &Model<f32>) -> Vec<u8> {
    let config = model.config().to_canonical();
    let blobs = model.blobs();
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
    for blob in &blobs {
        out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        for v in blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corrupt(format!("weight file ends early at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<Model<f32>> {
    if bytes.len() < 4 + 2 + 4 + 4 + 4 {
        return Err(Error::Corrupt(format!("weight file of {} bytes is too short", bytes.len())));
    }
    if &bytes[..4] != WEIGHTS_MAGIC {
        return Err(Error::Corrupt("bad weight file magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != WEIGHTS_VERSION {
        return Err(Error::Corrupt(format!("unsupported weight file version {version}")));
    }
    let config_len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(config_len)?).map_err(|_| Error::Corrupt("config text is not UTF-8".into()))?;
    let config = ModelConfig::from_canonical(text)?;
    let n_blobs = r.u32()? as usize;
    let mut blobs = Vec::with_capacity(n_blobs.min(1024));
    for _ in 0..n_blobs {
        let n = r.u32()? as usize;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Corrupt("blob length overflows".into()))?)?;
        blobs.push(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect());
    }
    if r.pos != body.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes after parameters", body.len() - r.pos)));
    }
    let mut model = Model::build(config, &mut ChaCha8Rng::seed_from_u64(0))?;
    model.set_blobs(&blobs)?;
    Ok(model)
}

pub fn save_weights(model: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weights(model)).map_err(|e| Error::io(path, e))
}

/// Loads a self-describing weight file.
pub fn load_weights(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let path = path.as_ref();
    decode_weights(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Loads a weight file and insists that it was saved for `expected`.
pub fn load_weights_matching(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Model<f32>> {
    let model = load_weights(path)?;
    if model.config() != expected {
        return Err(Error::ConfigMismatch(format!(
            "file holds {:?}, expected {:?}",
            model.config(),
            expected
        )));
    }
    Ok(model)
}
