//! `MMTN` tensor files.
//!
//! Layout (little-endian): `b"MMTN"`, u32 version, u32 dtype code
//! (1 = f32, 2 = f64), u32 rank, `rank` × u64 dims, payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"MMTN";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    fn code(self) -> u32 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            c => Err(Error::Format(format!("unknown dtype code {c}"))),
        }
    }
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&b),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn write_tensor(w: &mut impl Write, t: &Tensor, dtype: Dtype) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&TENSOR_VERSION.to_le_bytes())?;
    w.write_all(&dtype.code().to_le_bytes())?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    match dtype {
        Dtype::F64 => {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Dtype::F32 => {
            for v in t.data() {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads one tensor; f32 payloads are widened to f64.
pub fn read_tensor(r: &mut impl Read) -> Result<(Tensor, Dtype)> {
    read_magic(r, TENSOR_MAGIC)?;
    let version = read_u32(r)?;
    if version != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let dtype = Dtype::from_code(read_u32(r)?)?;
    let rank = read_u32(r)? as usize;
    if rank > 16 {
        return Err(Error::Format(format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u64(r)? as usize);
    }
    let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let n = n.ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))?;
    let width = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let mut bytes = Vec::new();
    r.take((n * width) as u64).read_to_end(&mut bytes)?;
    if bytes.len() != n * width {
        return Err(Error::Format(format!("payload truncated: {} of {} bytes", bytes.len(), n * width)));
    }
    let data = match dtype {
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Ok((Tensor::new(shape, data)?, dtype))
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor, dtype: Dtype) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t, dtype)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<(Tensor, Dtype)> {
    read_tensor(&mut BufReader::new(File::open(path)?))
}
