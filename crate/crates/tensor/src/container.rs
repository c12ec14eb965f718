//! Versioned binary container for named tensors.
//!
//! Datasets and checkpoints are stored in this one format: a fixed header
//! (magic, format version, entry count, free-form metadata string) followed by
//! per-tensor records of name, dtype, shape, and little-endian elements.
//! Writes go to a sibling temp file first and are renamed into place, so a
//! crash mid-write never leaves a truncated file behind the real name.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use thiserror::Error;

use crate::scalar::{Dtype, Scalar};

const MAGIC: &[u8; 4] = b"CDAT";
const FORMAT_VERSION: u32 = 1;
/// Sanity cap while parsing: no single tensor in this project comes close.
const MAX_ELEMENTS: u64 = 1 << 33;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a tensor container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("no tensor named {0:?} in container")]
    Missing(String),
    #[error("tensor {name:?} holds {stored:?}, requested {requested:?}")]
    DtypeMismatch { name: String, stored: Dtype, requested: Dtype },
}

struct Entry {
    name: String,
    dtype: Dtype,
    dims: Vec<usize>,
    /// Raw little-endian element bytes.
    data: Vec<u8>,
}

/// In-memory form of the container; build with `insert`, then `save`.
pub struct Container {
    pub meta: String,
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
}

impl Container {
    pub fn new(meta: impl Into<String>) -> Self {
        Container { meta: meta.into(), entries: Vec::new(), index: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn shape_of(&self, name: &str) -> Option<&[usize]> {
        self.index.get(name).map(|&i| self.entries[i].dims.as_slice())
    }

    /// Adds a tensor under `name`; duplicate names are a programming error.
    pub fn insert<T: Scalar>(&mut self, name: &str, value: &ArrayD<T>) {
        assert!(!self.index.contains_key(name), "container entry inserted twice: {name}");
        let standard;
        let view = if value.is_standard_layout() {
            value.view()
        } else {
            standard = value.as_standard_layout().to_owned();
            standard.view()
        };
        let mut data = Vec::with_capacity(value.len() * T::DTYPE.size_of());
        for v in view.iter() {
            v.write_le(&mut data);
        }
        self.entries.push(Entry {
            name: name.to_string(),
            dtype: T::DTYPE,
            dims: value.shape().to_vec(),
            data,
        });
        self.index.insert(name.to_string(), self.entries.len() - 1);
    }

    /// Decodes the tensor stored under `name` as element type `T`.
    pub fn get<T: Scalar>(&self, name: &str) -> Result<ArrayD<T>, ContainerError> {
        let &i = self
            .index
            .get(name)
            .ok_or_else(|| ContainerError::Missing(name.to_string()))?;
        let e = &self.entries[i];
        if e.dtype != T::DTYPE {
            return Err(ContainerError::DtypeMismatch {
                name: name.to_string(),
                stored: e.dtype,
                requested: T::DTYPE,
            });
        }
        let step = T::DTYPE.size_of();
        let vals: Vec<T> = e.data.chunks_exact(step).map(T::read_le).collect();
        ArrayD::from_shape_vec(IxDyn(&e.dims), vals)
            .map_err(|err| ContainerError::Malformed(format!("entry {name}: {err}")))
    }

    /// Serialises to `path` atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<(), ContainerError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        buf.extend_from_slice(self.meta.as_bytes());
        for e in &self.entries {
            buf.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            buf.extend_from_slice(e.name.as_bytes());
            buf.push(e.dtype.code());
            buf.push(e.dims.len() as u8);
            for &d in &e.dims {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            buf.extend_from_slice(&e.data);
        }

        let tmp = temp_sibling(path);
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&buf)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ContainerError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC.as_slice() {
            return Err(ContainerError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ContainerError::Version { found: version, expected: FORMAT_VERSION });
        }
        let count = r.u32()? as usize;
        let meta_len = r.u32()? as usize;
        let meta = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| ContainerError::Malformed("metadata is not utf-8".into()))?;

        let mut out = Container::new(meta);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| ContainerError::Malformed("tensor name is not utf-8".into()))?;
            let dtype = Dtype::from_code(r.u8()?)
                .ok_or_else(|| ContainerError::Malformed(format!("unknown dtype for {name}")))?;
            let ndim = r.u8()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            let mut elements: u64 = 1;
            for _ in 0..ndim {
                let d = r.u64()?;
                elements = elements.saturating_mul(d.max(1));
                dims.push(d as usize);
            }
            if elements > MAX_ELEMENTS {
                return Err(ContainerError::Malformed(format!("tensor {name} is implausibly large")));
            }
            let n_bytes = dims.iter().product::<usize>() * dtype.size_of();
            let data = r.take(n_bytes)?.to_vec();
            if out.index.contains_key(&name) {
                return Err(ContainerError::Malformed(format!("duplicate entry {name}")));
            }
            out.entries.push(Entry { name: name.clone(), dtype, dims, data });
            out.index.insert(name, out.entries.len() - 1);
        }
        if r.pos != bytes.len() {
            return Err(ContainerError::Malformed("trailing bytes after last entry".into()));
        }
        Ok(out)
    }
}

fn temp_sibling(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        if self.pos + n > self.bytes.len() {
            return Err(ContainerError::Malformed("file truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
