//! Checkpoint files.
//!
//! Layout (little-endian): `b"MMCK"`, u32 version, u64 config length,
//! config JSON, u32 tensor count, then per tensor a u32 name length, the
//! UTF-8 name and one `MMTN` record.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::grad::ParamStore;
use crate::io::{read_magic, read_tensor, read_u32, read_u64, write_tensor, Dtype};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
}

pub fn write_checkpoint(w: &mut impl Write, config: &ModelConfig, params: &ParamStore, dtype: Dtype) -> Result<()> {
    let json = serde_json::to_vec(config)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params.iter() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        write_tensor(w, &p.value, dtype)?;
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    read_magic(r, CHECKPOINT_MAGIC)?;
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = read_u64(r)? as usize;
    let mut json = Vec::new();
    r.take(len as u64).read_to_end(&mut json)?;
    if json.len() != len {
        return Err(Error::Format("checkpoint config truncated".into()));
    }
    let config: ModelConfig = serde_json::from_slice(&json)?;
    let count = read_u32(r)?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let n = read_u32(r)? as usize;
        let mut name = Vec::new();
        r.take(n as u64).read_to_end(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let (t, _) = read_tensor(r)?;
        params.add(name, t)?;
    }
    Ok(Checkpoint { config, params })
}

pub fn save_checkpoint(path: impl AsRef<Path>, config: &ModelConfig, params: &ParamStore, dtype: Dtype) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, config, params, dtype)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
