//! `WGCT` tensor dataset files and their text manifests.
//!
//! Layout (little-endian): magic `WGCT`, version `u32`, dtype `u8`
//! (0 complex as `f32` pairs, 1 real `f32`), dims `T, S, F` as `u32`,
//! sample count `u32`, then the payload sample-major, `t`, `s`, `f`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, FormatError, Result};
use crate::numerics::Tensor;

pub const DATASET_MAGIC: &[u8; 4] = b"WGCT";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 12 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    Complex = 0,
    Real = 1,
}

impl DType {
    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(DType::Complex),
            1 => Ok(DType::Real),
            c => Err(FormatError::UnknownDtype(c).into()),
        }
    }

    fn lanes(self) -> usize {
        match self {
            DType::Complex => 2,
            DType::Real => 1,
        }
    }
}

/// Equally shaped samples; complex samples are `[T, S, F, 2]`, real ones `[T, S, F]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dtype: DType,
    pub dims: [usize; 3],
    pub samples: Vec<Tensor<f32>>,
}

impl Dataset {
    pub fn new(dtype: DType, dims: [usize; 3], samples: Vec<Tensor<f32>>) -> Result<Self> {
        let d = Dataset { dtype, dims, samples };
        let want = d.sample_shape();
        if let Some(s) = d.samples.iter().find(|s| s.shape() != want) {
            return Err(Error::shape("Dataset", format!("sample {:?}, expected {want:?}", s.shape())));
        }
        if dims.iter().any(|&x| x > u32::MAX as usize) || d.samples.len() > u32::MAX as usize {
            return Err(Error::Contract("dataset dimension exceeds u32".into()));
        }
        Ok(d)
    }

    pub fn sample_shape(&self) -> Vec<usize> {
        let mut s = self.dims.to_vec();
        if self.dtype == DType::Complex {
            s.push(2);
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let per: usize = self.dims.iter().product::<usize>() * self.dtype.lanes();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * per * self.samples.len());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.push(self.dtype as u8);
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.samples.len() as u32).to_le_bytes());
        for s in &self.samples {
            for x in s.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != DATASET_MAGIC {
            let found = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
            return Err(FormatError::BadMagic { expected: "WGCT".into(), found }.into());
        }
        if bytes.len() < HEADER_LEN {
            return Err(FormatError::Truncated { expected: HEADER_LEN, found: bytes.len() }.into());
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
        let version = u32_at(4) as u32;
        if version != DATASET_VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let dtype = DType::from_code(bytes[8])?;
        let dims = [u32_at(9), u32_at(13), u32_at(17)];
        let count = u32_at(21);
        let per = dims.iter().try_fold(dtype.lanes(), |a, &d| a.checked_mul(d));
        let expected = per.and_then(|p| p.checked_mul(count)).and_then(|n| n.checked_mul(4)).and_then(|n| n.checked_add(HEADER_LEN));
        let Some(expected) = expected else {
            return Err(Error::Contract("dataset header sizes overflow".into()));
        };
        if bytes.len() < expected {
            return Err(FormatError::Truncated { expected, found: bytes.len() }.into());
        }
        if bytes.len() > expected {
            return Err(FormatError::TrailingBytes(bytes.len() - expected).into());
        }
        let per = per.unwrap_or(0);
        let shape = {
            let mut s = dims.to_vec();
            if dtype == DType::Complex {
                s.push(2);
            }
            s
        };
        let payload = &bytes[HEADER_LEN..];
        let samples = (0..count)
            .map(|i| {
                let data = payload[i * per * 4..(i + 1) * per * 4]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                Tensor::new(shape.clone(), data)
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { dtype, dims, samples })
    }
}

/// Path of the manifest written next to `path`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    s.into()
}

fn payload_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(&bytes[HEADER_LEN.min(bytes.len())..]))
}

/// `key=value` manifest text; keys are sorted and `sha256` is always present.
pub fn manifest_text(bytes: &[u8], meta: &BTreeMap<String, String>) -> Result<String> {
    let mut all = meta.clone();
    if all.contains_key("sha256") {
        return Err(Error::Contract("manifest key sha256 is reserved".into()));
    }
    all.insert("sha256".into(), payload_sha256(bytes));
    let mut s = String::new();
    for (k, v) in &all {
        if k.contains(['=', '\n']) || v.contains('\n') || k.is_empty() {
            return Err(FormatError::Manifest(format!("unencodable entry {k:?}")).into());
        }
        s.push_str(&format!("{k}={v}\n"));
    }
    Ok(s)
}

pub fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| FormatError::Manifest(format!("line without '=': {line:?}")))?;
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(FormatError::Manifest(format!("duplicate key {k:?}")).into());
        }
    }
    Ok(out)
}

/// Write the dataset and its manifest.
pub fn save_dataset(path: &Path, data: &Dataset, meta: &BTreeMap<String, String>) -> Result<()> {
    let bytes = data.to_bytes();
    let text = manifest_text(&bytes, meta)?;
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let m = manifest_path(path);
    std::fs::write(&m, text).map_err(|e| Error::io(&m, e))
}

/// Read a dataset, checking it against its manifest's checksum.
pub fn load_dataset(path: &Path) -> Result<(Dataset, BTreeMap<String, String>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let m = manifest_path(path);
    let meta = parse_manifest(&std::fs::read_to_string(&m).map_err(|e| Error::io(&m, e))?)?;
    let data = Dataset::from_bytes(&bytes)?;
    match meta.get("sha256") {
        Some(h) if *h == payload_sha256(&bytes) => Ok((data, meta)),
        Some(_) => Err(FormatError::BadChecksum.into()),
        None => Err(FormatError::Manifest("missing sha256".into()).into()),
    }
}
