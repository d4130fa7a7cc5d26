//! The IDX container used by the MNIST distribution.
//!
//! Images: big-endian `0x00000803`, then `count`, `rows`, `cols` as `u32`,
//! then `count·rows·cols` unsigned bytes. Labels: `0x00000801`, `count`,
//! then `count` bytes.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::DataError;
use crate::linalg::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub enum Idx {
    /// Images scaled to `[0, 1]`, one flattened image per row.
    Images {
        height: usize,
        width: usize,
        pixels: Matrix,
    },
    Labels(Vec<u8>),
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DataError::Length {
            expected: at + 4,
            actual: bytes.len(),
        })
}

pub fn parse_idx(bytes: &[u8]) -> Result<Idx, DataError> {
    match be_u32(bytes, 0)? {
        IMAGES_MAGIC => {
            let count = be_u32(bytes, 4)? as usize;
            let rows = be_u32(bytes, 8)? as usize;
            let cols = be_u32(bytes, 12)? as usize;
            let expected = 16 + count * rows * cols;
            if bytes.len() != expected {
                return Err(DataError::Length {
                    expected,
                    actual: bytes.len(),
                });
            }
            let data = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
            let pixels = Matrix::from_vec(count, rows * cols, data).expect("length checked");
            Ok(Idx::Images {
                height: rows,
                width: cols,
                pixels,
            })
        }
        LABELS_MAGIC => {
            let count = be_u32(bytes, 4)? as usize;
            let expected = 8 + count;
            if bytes.len() != expected {
                return Err(DataError::Length {
                    expected,
                    actual: bytes.len(),
                });
            }
            Ok(Idx::Labels(bytes[8..].to_vec()))
        }
        other => Err(DataError::Magic(other)),
    }
}

/// Inverse of [`parse_idx`] for images; pixels are rounded back to bytes.
pub fn encode_idx_images(height: usize, width: usize, pixels: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.as_slice().len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(pixels.rows() as u32).to_be_bytes());
    out.extend_from_slice(&(height as u32).to_be_bytes());
    out.extend_from_slice(&(width as u32).to_be_bytes());
    out.extend(
        pixels
            .as_slice()
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads an IDX file, transparently inflating gzip input.
pub fn read_idx_file(path: &Path) -> Result<Idx, DataError> {
    let raw = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| DataError::io(path, e))?;
        out
    } else {
        raw
    };
    parse_idx(&bytes)
}
