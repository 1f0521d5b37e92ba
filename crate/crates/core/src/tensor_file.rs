//! SGTF binary tensor files.
//!
//! Layout (all little-endian): magic `SGTF`, `u16` version, `u16` rank,
//! `rank × u64` dims, then the row-major payload. Version 1 stores IEEE-754
//! binary32 values; version 2 stores binary64 so that `f64` tensors survive a
//! round trip unchanged.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SGTF";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    /// Version 1, 4-byte payload values.
    F32,
    /// Version 2, 8-byte payload values.
    F64,
}

impl Precision {
    pub fn version(self) -> u16 {
        match self {
            Precision::F32 => 1,
            Precision::F64 => 2,
        }
    }

    fn from_version(v: u16) -> Result<Self> {
        match v {
            1 => Ok(Precision::F32),
            2 => Ok(Precision::F64),
            other => Err(bad(format!("unsupported SGTF version {other}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

fn bad(message: String) -> Error {
    Error::Parse { line: 0, message }
}

pub fn write_tensor(w: &mut impl Write, t: &Tensor, precision: Precision) -> Result<()> {
    let rank = u16::try_from(t.rank()).map_err(|_| Error::argument("tensor rank exceeds u16"))?;
    w.write_all(MAGIC)?;
    w.write_all(&precision.version().to_le_bytes())?;
    w.write_all(&rank.to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut payload = Vec::with_capacity(t.len() * precision.width());
    match precision {
        Precision::F32 => t.data().iter().for_each(|&v| payload.extend_from_slice(&(v as f32).to_le_bytes())),
        Precision::F64 => t.data().iter().for_each(|&v| payload.extend_from_slice(&v.to_le_bytes())),
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated SGTF header".into()))?;
    if &magic != MAGIC {
        return Err(bad(format!("bad SGTF magic {magic:?}")));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2).map_err(|_| bad("truncated SGTF header".into()))?;
    let precision = Precision::from_version(u16::from_le_bytes(b2))?;
    r.read_exact(&mut b2).map_err(|_| bad("truncated SGTF header".into()))?;
    let rank = u16::from_le_bytes(b2) as usize;
    let mut shape = Vec::with_capacity(rank);
    let mut b8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut b8).map_err(|_| bad("truncated SGTF dims".into()))?;
        shape.push(
            usize::try_from(u64::from_le_bytes(b8)).map_err(|_| bad("dimension exceeds address space".into()))?,
        );
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("element count overflows".into()))?;
    let bytes = count
        .checked_mul(precision.width())
        .ok_or_else(|| bad("payload size overflows".into()))?;
    let mut payload = Vec::new();
    r.take(bytes as u64).read_to_end(&mut payload)?;
    if payload.len() != bytes {
        return Err(bad(format!("payload has {} bytes, expected {bytes}", payload.len())));
    }
    let data = match precision {
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    Tensor::new(shape, data)
}

pub fn encode(t: &Tensor, precision: Precision) -> Vec<u8> {
    let mut out = Vec::new();
    write_tensor(&mut out, t, precision).expect("writing to a Vec cannot fail");
    out
}

/// Decodes exactly one tensor; trailing bytes are an error.
pub fn decode(mut bytes: &[u8]) -> Result<Tensor> {
    let t = read_tensor(&mut bytes)?;
    if !bytes.is_empty() {
        return Err(bad(format!("{} trailing bytes after tensor", bytes.len())));
    }
    Ok(t)
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor, precision: Precision) -> Result<()> {
    std::fs::write(path, encode(t, precision))?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode(&std::fs::read(path)?)
}
