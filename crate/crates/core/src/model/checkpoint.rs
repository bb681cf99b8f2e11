//! Binary checkpoint container.
//!
//! Layout (little endian): magic `CVCXCKPT`, `u32` version, `u32` length and
//! UTF-8 JSON of the [`EncoderConfig`], `u32` tensor count, then per tensor a
//! `u32`-prefixed name, `u32` rows, `u32` cols and `rows*cols` `f64` values.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAGIC: &[u8; 8] = b"CVCXCKPT";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn checkpoint_bytes(params: &EncoderParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let config = serde_json::to_vec(&params.config).expect("config serializes");
    put_u32(&mut out, config.len());
    out.extend_from_slice(&config);
    let tensors = params.named_tensors();
    put_u32(&mut out, tensors.len());
    for (name, m) in tensors {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, m.rows());
        put_u32(&mut out, m.cols());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Lowercase hex SHA-256 of the checkpoint bytes.
pub fn checkpoint_hash(params: &EncoderParams) -> String {
    hex::encode(Sha256::digest(checkpoint_bytes(params)))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<EncoderParams> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.u32()?;
    let config: EncoderConfig = serde_json::from_slice(r.take(n)?)
        .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    config.validate()?;
    // Zero-seeded init only provides the tensor layout; every value is overwritten.
    let mut params = EncoderParams::init(&config, &mut crate::rng::indexed(0, 0))?;
    let names: Vec<(String, (usize, usize))> = params
        .named_tensors()
        .into_iter()
        .map(|(n, m)| (n, m.shape()))
        .collect();
    let count = r.u32()?;
    if count != names.len() {
        return Err(Error::Checkpoint(format!("expected {} tensors, found {count}", names.len())));
    }
    for ((name, shape), dst) in names.iter().zip(params.tensors_mut()) {
        let len = r.u32()?;
        let got = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        if got != name {
            return Err(Error::Checkpoint(format!("expected tensor {name}, found {got}")));
        }
        let (rows, cols) = (r.u32()?, r.u32()?);
        if (rows, cols) != *shape {
            return Err(Error::Checkpoint(format!("tensor {name} has shape {rows}x{cols}")));
        }
        let raw = r.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *dst = Matrix::from_vec(rows, cols, data);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    if !params.is_finite() {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &EncoderParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}
