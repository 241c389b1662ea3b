//! `WGCK` named-tensor checkpoints.
//!
//! Layout (little-endian): magic `WGCK`, version `u32`, record count `u32`;
//! per record a `u16` name length, the UTF-8 name, rank `u8`, `u32` dims
//! and the `f32` payload; then a CRC32 of all record bytes.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::numerics::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Ordered named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub records: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor<f32>) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(FormatError::DuplicateName(name).into());
        }
        if name.len() > u16::MAX as usize || t.rank() > u8::MAX as usize {
            return Err(Error::Contract(format!("record {name:?} too large for the format")));
        }
        self.records.push((name, t));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Every record of `store`, in store order.
    pub fn extend_from(&mut self, store: &ParamStore<f32>) -> Result<()> {
        for (n, t) in store.iter() {
            self.push(n, t.clone())?;
        }
        Ok(())
    }

    /// Records whose names satisfy `keep`, as a parameter store.
    pub fn store(&self, keep: impl Fn(&str) -> bool) -> Result<ParamStore<f32>> {
        let mut s = ParamStore::new();
        for (n, t) in self.records.iter().filter(|(n, _)| keep(n)) {
            s.insert(n.clone(), t.clone())?;
        }
        Ok(s)
    }

    /// UTF-8 text stored one byte per element.
    pub fn push_text(&mut self, name: &str, text: &str) -> Result<()> {
        let bytes: Vec<f32> = text.bytes().map(f32::from).collect();
        let n = bytes.len();
        self.push(name, Tensor::new([n], bytes)?)
    }

    pub fn text(&self, name: &str) -> Result<Option<String>> {
        let Some(t) = self.get(name) else { return Ok(None) };
        let bytes: Vec<u8> = t.data().iter().map(|&x| x as u8).collect();
        String::from_utf8(bytes).map(Some).map_err(|_| Error::Contract(format!("record {name:?} is not UTF-8 text")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        for (name, t) in &self.records {
            body.extend_from_slice(&(name.len() as u16).to_le_bytes());
            body.extend_from_slice(name.as_bytes());
            body.push(t.rank() as u8);
            for &d in t.shape() {
                body.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for x in t.data() {
                body.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(body.len() + 16);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            let found = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
            return Err(FormatError::BadMagic { expected: "WGCK".into(), found }.into());
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let count = r.u32()? as usize;
        let body_start = r.pos;
        let mut records = Vec::new();
        let mut seen = BTreeSet::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| FormatError::Manifest("record name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).and_then(|n| n.checked_mul(4));
            let n = n.ok_or_else(|| Error::Contract(format!("record {name:?} size overflows")))?;
            let data = r.take(n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            if !seen.insert(name.clone()) {
                return Err(FormatError::DuplicateName(name).into());
            }
            records.push((name, Tensor::new(shape, data)?));
        }
        let body_end = r.pos;
        let crc = r.u32()?;
        if r.pos != bytes.len() {
            return Err(FormatError::TrailingBytes(bytes.len() - r.pos).into());
        }
        if crc != crc32fast::hash(&bytes[body_start..body_end]) {
            return Err(FormatError::BadChecksum.into());
        }
        Ok(Checkpoint { records })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(FormatError::Truncated { expected: self.pos.saturating_add(n), found: self.bytes.len() })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, ck.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
