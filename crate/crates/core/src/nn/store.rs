//! Named parameter sets and their flat binary file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "NNPSTORE"
//! version u32      1
//! count   u64
//! count x {
//!     name_len u32, name (UTF-8)
//!     rank u32, rank x u64 extents
//!     product(extents) x f64
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::tensor::Tensor;
use crate::scalar::Scalar;

pub const STORE_MAGIC: &[u8; 8] = b"NNPSTORE";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("truncated file")]
    Truncated,
    #[error("name is not UTF-8")]
    Utf8,
    #[error("implausible size field {0}")]
    Size(u64),
    #[error("duplicate entry `{0}`")]
    Duplicate(String),
}

/// Ordered map of named tensors. Iteration is by name, which keeps
/// serialization and optimizer updates deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(STORE_MAGIC)?;
        w.write_all(&STORE_VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_str(w, name)?;
            write_tensor(w, t)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, StoreError> {
        read_header(r, STORE_MAGIC)?;
        let count = read_u64(r)?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name = read_str(r)?;
            let t = read_tensor(r)?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(StoreError::Duplicate(name));
            }
        }
        Ok(Self { tensors })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let bytes = fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

impl<'a, T> IntoIterator for &'a ParamStore<T> {
    type Item = (&'a String, &'a Tensor<T>);
    type IntoIter = std::collections::btree_map::Iter<'a, String, Tensor<T>>;

    fn into_iter(self) -> Self::IntoIter {
        self.tensors.iter()
    }
}

impl<T: Scalar> FromIterator<(String, Tensor<T>)> for ParamStore<T> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<T>)>>(iter: I) -> Self {
        Self {
            tensors: iter.into_iter().collect(),
        }
    }
}

// Shared record framing, also used by the embedding file reader.

pub(crate) fn read_header(r: &mut impl Read, magic: &[u8; 8]) -> Result<(), StoreError> {
    let mut m = [0u8; 8];
    read_exact(r, &mut m)?;
    if &m != magic {
        return Err(StoreError::BadMagic(m.to_vec()));
    }
    let version = read_u32(r)?;
    if version != STORE_VERSION {
        return Err(StoreError::Version(version));
    }
    Ok(())
}

pub(crate) fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub(crate) fn write_tensor<T: Scalar>(w: &mut impl Write, t: &Tensor<T>) -> io::Result<()> {
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), StoreError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => StoreError::Truncated,
        _ => StoreError::Io(e),
    })
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32, StoreError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64, StoreError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_str(r: &mut impl Read) -> Result<String, StoreError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| StoreError::Utf8)
}

const MAX_ELEMENTS: u64 = 1 << 32;

pub(crate) fn read_tensor<T: Scalar>(r: &mut impl Read) -> Result<Tensor<T>, StoreError> {
    let rank = read_u32(r)?;
    if rank > 8 {
        return Err(StoreError::Size(rank as u64));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut n: u64 = 1;
    for _ in 0..rank {
        let d = read_u64(r)?;
        n = n
            .checked_mul(d)
            .filter(|&n| n <= MAX_ELEMENTS)
            .ok_or(StoreError::Size(d))?;
        shape.push(d as usize);
    }
    let mut data = Vec::with_capacity(n as usize);
    let mut b = [0u8; 8];
    for _ in 0..n {
        read_exact(r, &mut b)?;
        data.push(T::of(f64::from_le_bytes(b)));
    }
    Ok(Tensor::new(shape, data))
}
