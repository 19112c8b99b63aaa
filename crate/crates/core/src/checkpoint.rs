//! Named parameter collections and the `TSPW` binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"TSPW" | u32 version | u32 tensor count
//! per tensor: u32 name length | UTF-8 name | u32 rank | u64 extent * rank | f64 payload
//! ```

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

pub const MAGIC: &[u8; 4] = b"TSPW";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a TSPW file")]
    BadMagic,
    #[error("unsupported TSPW version {0}")]
    Version(u32),
    #[error("tensor name is not UTF-8")]
    Name,
    #[error("duplicate parameter {0}")]
    Duplicate(String),
    #[error("missing parameter {0}")]
    Missing(String),
    #[error("parameter {name} has shape {actual:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Ordered name -> tensor map. Insertion order is the serialization order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<(), CheckpointError> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(CheckpointError::Duplicate(name));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor, CheckpointError> {
        self.get(name).ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Replaces an existing tensor, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<(), CheckpointError> {
        let slot = self
            .get_mut(name)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        if slot.shape() != value.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                expected: slot.shape().to_vec(),
                actual: value.shape().to_vec(),
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let count = read_u32(&mut r)?;
        let mut store = Self::new();
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| CheckpointError::Name)?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            store.insert(name, Tensor::new(shape, data)?)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        crate::io::write_atomic(path.as_ref(), &buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&bytes[..])
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(vec![1, 2], vec![1.0, -0.5]).unwrap()).unwrap();
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        let mut expected = b"TSPW".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.push(b'w');
        expected.extend(2u32.to_le_bytes());
        expected.extend(1u64.to_le_bytes());
        expected.extend(2u64.to_le_bytes());
        expected.extend(1.0f64.to_le_bytes());
        expected.extend((-0.5f64).to_le_bytes());
        assert_eq!(buf, expected);
        assert_eq!(ParamStore::read_from(&buf[..]).unwrap(), store);
    }

    #[test]
    fn rejects_bad_magic_and_duplicates() {
        assert!(matches!(
            ParamStore::read_from(&b"XXXX\x01\0\0\0\0\0\0\0"[..]),
            Err(CheckpointError::BadMagic)
        ));
        let mut store = ParamStore::new();
        store.insert("a", Tensor::zeros(&[1])).unwrap();
        assert!(store.insert("a", Tensor::zeros(&[1])).is_err());
        assert!(store.set("a", Tensor::zeros(&[2])).is_err());
    }
}
