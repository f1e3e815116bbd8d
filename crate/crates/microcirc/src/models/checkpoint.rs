//! Checkpoint file format.
//!
//! Layout, all integers little-endian:
//!   magic "DFML"
//!   u32 version
//!   u32 descriptor byte length, then that many bytes of plain-text
//!     `key=value` lines (architecture fields and training metadata)
//!   per-parameter records until end of file:
//!     u32 name length, name bytes (UTF-8)
//!     u32 rank, u32 extents...
//!     f32 payload, row-major
//!
//! Floats are stored as f32 regardless of compute precision. Save → load →
//! save is byte-identical because descriptor keys and parameter records
//! keep their order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::tensor::{Elem, Tensor};

use super::{ModelError, Result};

pub const MAGIC: &[u8; 4] = b"DFML";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<u32>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    /// Ordered key=value pairs: architecture descriptor plus training
    /// metadata (seed, epoch, final loss).
    pub descriptor: Vec<(String, String)>,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn descriptor_value(&self, key: &str) -> Option<&str> {
        self.descriptor
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn from_named_tensors<E: Elem>(
        descriptor: Vec<(String, String)>,
        tensors: &[(String, &Tensor<E>)],
    ) -> Self {
        let params = tensors
            .iter()
            .map(|(name, t)| ParamRecord {
                name: name.clone(),
                shape: t.shape().iter().map(|&e| e as u32).collect(),
                values: t.data().iter().map(|&v| v.to_f32()).collect(),
            })
            .collect();
        Self {
            version: VERSION,
            descriptor,
            params,
        }
    }

    /// Copy stored parameters into a model's named tensors. Every stored
    /// name must exist in the model and every model tensor must be stored.
    pub fn apply_to<E: Elem>(&self, tensors: &mut [(String, &mut Tensor<E>)]) -> Result<()> {
        for record in &self.params {
            let target = tensors
                .iter_mut()
                .find(|(name, _)| *name == record.name)
                .ok_or_else(|| ModelError::UnknownParam(record.name.clone()))?;
            let shape: Vec<usize> = record.shape.iter().map(|&e| e as usize).collect();
            if target.1.shape() != shape.as_slice() {
                return Err(ModelError::BadShapeHeader {
                    name: record.name.clone(),
                    shape: record.shape.clone(),
                });
            }
            for (dst, &src) in target.1.data_mut().iter_mut().zip(&record.values) {
                *dst = E::from_f32(src);
            }
        }
        for (name, _) in tensors.iter() {
            if !self.params.iter().any(|r| &r.name == name) {
                return Err(ModelError::MissingParam(name.clone()));
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&checkpoint.version.to_le_bytes())?;
    let mut descriptor = String::new();
    for (k, v) in &checkpoint.descriptor {
        descriptor.push_str(k);
        descriptor.push('=');
        descriptor.push_str(v);
        descriptor.push('\n');
    }
    w.write_all(&(descriptor.len() as u32).to_le_bytes())?;
    w.write_all(descriptor.as_bytes())?;
    for record in &checkpoint.params {
        w.write_all(&(record.name.len() as u32).to_le_bytes())?;
        w.write_all(record.name.as_bytes())?;
        w.write_all(&(record.shape.len() as u32).to_le_bytes())?;
        let mut expected = 1usize;
        for &extent in &record.shape {
            w.write_all(&extent.to_le_bytes())?;
            expected *= extent as usize;
        }
        if expected != record.values.len() {
            return Err(ModelError::ShapePayloadMismatch {
                name: record.name.clone(),
                shape: record.shape.clone(),
                payload: record.values.len(),
            });
        }
        for &v in &record.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(ModelError::VersionMismatch {
            got: version,
            expected: VERSION,
        });
    }
    let desc_len = read_u32(&mut r, "descriptor length")? as usize;
    let mut desc_bytes = vec![0u8; desc_len];
    read_exact(&mut r, &mut desc_bytes, "descriptor")?;
    let desc_text = String::from_utf8(desc_bytes)
        .map_err(|_| ModelError::BadDescriptor("descriptor is not valid UTF-8".into()))?;
    let mut descriptor = Vec::new();
    for line in desc_text.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ModelError::BadDescriptor(format!("line without '=': {line:?}")))?;
        descriptor.push((k.to_string(), v.to_string()));
    }

    let mut params = Vec::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read(&mut len_buf)? {
            0 => break,
            4 => {}
            n => {
                read_exact(&mut r, &mut len_buf[n..], "parameter name length")?;
            }
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, "parameter name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| ModelError::BadDescriptor("parameter name is not valid UTF-8".into()))?;
        let rank = read_u32(&mut r, "parameter rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut count = 1usize;
        for _ in 0..rank {
            let extent = read_u32(&mut r, "shape extent")?;
            count = count.saturating_mul(extent as usize);
            shape.push(extent);
        }
        if shape.iter().any(|&e| e == 0) {
            return Err(ModelError::BadShapeHeader { name, shape });
        }
        let mut values = Vec::with_capacity(count);
        let mut buf = [0u8; 4];
        for _ in 0..count {
            read_exact(&mut r, &mut buf, "parameter payload")?;
            values.push(f32::from_le_bytes(buf));
        }
        params.push(ParamRecord {
            name,
            shape,
            values,
        });
    }
    Ok(Checkpoint {
        version,
        descriptor,
        params,
    })
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| ModelError::Truncated(what.to_string()))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}
