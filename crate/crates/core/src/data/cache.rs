//! Binary cache container.
//!
//! ```text
//! "RDAC"            4 bytes
//! version           u32 LE
//! section count     u32 LE
//! per section:      name length u16 LE, UTF-8 name,
//!                   offset u64 LE (from file start), length u64 LE (bytes),
//!                   SHA-256 of the payload (32 bytes)
//! payloads          little-endian f64 values, in table order
//! ```
//!
//! Matrices are stored as `[rows, cols, data...]`.

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::Matrix;

pub const CACHE_MAGIC: &[u8; 4] = b"RDAC";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("not an RDAC cache file (bad magic); regenerate it with `rdac data prepare`")]
    BadMagic,
    #[error(
        "cache format version {found} is not supported (expected {expected}); regenerate it with `rdac data prepare`"
    )]
    Version { found: u32, expected: u32 },
    #[error("cache file is truncated; regenerate it with `rdac data prepare`")]
    Truncated,
    #[error("checksum mismatch in cache section `{0}`; the file is corrupt, regenerate it with `rdac data prepare`")]
    Checksum(String),
    #[error("cache section `{0}` is missing")]
    Missing(String),
    #[error("malformed cache: {0}")]
    Malformed(String),
    #[error("cache io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CacheContainer {
    sections: Vec<(String, Vec<f64>)>,
}

impl CacheContainer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a section, replacing an existing one with the same name.
    pub fn put(&mut self, name: impl Into<String>, values: Vec<f64>) {
        let name = name.into();
        if let Some(slot) = self.sections.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = values;
        } else {
            self.sections.push((name, values));
        }
    }

    pub fn put_matrix(&mut self, name: impl Into<String>, m: &Matrix) {
        let mut values = Vec::with_capacity(2 + m.as_slice().len());
        values.push(m.rows() as f64);
        values.push(m.cols() as f64);
        values.extend_from_slice(m.as_slice());
        self.put(name, values);
    }

    pub fn get(&self, name: &str) -> Result<&[f64], CacheError> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| CacheError::Missing(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.sections.iter().any(|(n, _)| n == name)
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix, CacheError> {
        let values = self.get(name)?;
        if values.len() < 2 {
            return Err(CacheError::Malformed(format!(
                "matrix section `{name}` lacks a shape header"
            )));
        }
        let (rows, cols) = (values[0] as usize, values[1] as usize);
        Matrix::from_vec(rows, cols, values[2..].to_vec())
            .map_err(|e| CacheError::Malformed(format!("matrix section `{name}`: {e}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header_len: usize = 12
            + self
                .sections
                .iter()
                .map(|(n, _)| 2 + n.len() + 8 + 8 + 32)
                .sum::<usize>();
        let payload_len: usize = self.sections.iter().map(|(_, v)| v.len() * 8).sum();
        let mut payload = Vec::with_capacity(payload_len);
        let mut out = Vec::with_capacity(header_len + payload_len);
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        let mut offset = header_len as u64;
        for (name, values) in &self.sections {
            let start = payload.len();
            for v in values {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            let bytes = &payload[start..];
            let len = bytes.len() as u64;
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(&Sha256::digest(bytes));
            offset += len;
        }
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CacheError> {
        let mut cursor = Cursor { bytes, at: 0 };
        if cursor.take(4)? != CACHE_MAGIC {
            return Err(CacheError::BadMagic);
        }
        let version = cursor.u32()?;
        if version != CACHE_VERSION {
            return Err(CacheError::Version {
                found: version,
                expected: CACHE_VERSION,
            });
        }
        let count = cursor.u32()? as usize;
        let mut sections = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = cursor.u16()? as usize;
            let name = std::str::from_utf8(cursor.take(name_len)?)
                .map_err(|_| CacheError::Malformed("section name is not UTF-8".into()))?
                .to_string();
            let offset = cursor.u64()? as usize;
            let len = cursor.u64()? as usize;
            let digest: [u8; 32] = cursor.take(32)?.try_into().expect("32 bytes");
            let end = offset.checked_add(len).ok_or(CacheError::Truncated)?;
            let payload = bytes.get(offset..end).ok_or(CacheError::Truncated)?;
            if Sha256::digest(payload).as_slice() != digest {
                return Err(CacheError::Checksum(name));
            }
            if !len.is_multiple_of(8) {
                return Err(CacheError::Malformed(format!(
                    "section `{name}` is not a whole number of f64 values"
                )));
            }
            let values = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            sections.push((name, values));
        }
        Ok(Self { sections })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn write(&self, path: &Path) -> Result<(), CacheError> {
        crate::util::write_atomic(path, &self.to_bytes()).map_err(|source| CacheError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CacheError> {
        let bytes = std::fs::read(path).map_err(|source| CacheError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CacheError> {
        let out = self.bytes.get(self.at..self.at + n).ok_or(CacheError::Truncated)?;
        self.at += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, CacheError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CacheError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> CacheContainer {
        let mut c = CacheContainer::new();
        c.put("meta", vec![1.0, 2.0, f64::MIN_POSITIVE, -0.0]);
        c.put_matrix("w", &Matrix::from_rows(&[[1.5, -2.25], [1e-300, 3.0]]));
        c.put("empty", vec![]);
        c
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let c = sample();
        let back = CacheContainer::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), c.to_bytes());
        assert_eq!(back.get("meta").unwrap()[3].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back.matrix("w").unwrap(), c.matrix("w").unwrap());
    }

    #[test]
    fn corrupt_payload_fails_checksum() {
        let mut bytes = sample().to_bytes();
        let last = bytes.len() - 9;
        bytes[last] ^= 0x01;
        assert!(matches!(
            CacheContainer::from_bytes(&bytes),
            Err(CacheError::Checksum(_))
        ));
    }

    #[test]
    fn bumped_version_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[4..8].copy_from_slice(&(CACHE_VERSION + 1).to_le_bytes());
        let err = CacheContainer::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, CacheError::Version { found: 2, expected: 1 }));
        assert!(err.to_string().contains("regenerate"));
    }

    #[test]
    fn truncation_and_magic() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            CacheContainer::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CacheError::Truncated)
        ));
        assert!(matches!(
            CacheContainer::from_bytes(b"NOPE\0\0\0\0"),
            Err(CacheError::BadMagic)
        ));
    }

    #[test]
    fn write_and_read_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.rdac");
        sample().write(&path).unwrap();
        assert_eq!(CacheContainer::read(&path).unwrap(), sample());
    }

    proptest! {
        #[test]
        fn arbitrary_bits_roundtrip(bits in proptest::collection::vec(any::<u64>(), 0..40)) {
            let mut c = CacheContainer::new();
            c.put("x", bits.iter().map(|&b| f64::from_bits(b)).collect());
            let back = CacheContainer::from_bytes(&c.to_bytes()).unwrap();
            let got: Vec<u64> = back.get("x").unwrap().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, bits);
        }
    }
}
