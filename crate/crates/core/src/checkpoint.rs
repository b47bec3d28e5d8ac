//! Shared binary checkpoint primitives: a small versioned, chunk-free
//! little-endian format used by every trainable component. Parameter
//! payloads are always stored as f32 regardless of the in-memory scalar.

use crate::error::{Error, Result};
use crate::scalar::Real;
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"ANMC";
pub const VERSION: u32 = 1;

/// Section tag distinguishing what a checkpoint stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    HashGrid = 1,
    Mlp = 2,
    SdfField = 3,
    RadianceField = 4,
    DeformField = 5,
}

impl Kind {
    fn from_u32(v: u32) -> Result<Kind> {
        Ok(match v {
            1 => Kind::HashGrid,
            2 => Kind::Mlp,
            3 => Kind::SdfField,
            4 => Kind::RadianceField,
            5 => Kind::DeformField,
            _ => return Err(Error::Checkpoint(format!("unknown section kind {v}"))),
        })
    }
}

pub fn write_header<W: Write>(w: &mut W, kind: Kind) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, kind as u32)?;
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R, expect: Kind) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let kind = Kind::from_u32(read_u32(r)?)?;
    if kind != expect {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {kind:?}, expected {expect:?}"
        )));
    }
    Ok(())
}

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Length-prefixed f32 parameter block (values narrowed from S).
pub fn write_params<W: Write, S: Real>(w: &mut W, params: &[S]) -> Result<()> {
    write_u64(w, params.len() as u64)?;
    let mut buf = Vec::with_capacity(params.len() * 4);
    for p in params {
        buf.extend_from_slice(&p.to_f32_().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_params<R: Read, S: Real>(r: &mut R) -> Result<Vec<S>> {
    let n = read_u64(r)? as usize;
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| S::from_f32_(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}
