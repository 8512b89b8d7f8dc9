//! Decoder for the IDX container used by MNIST.
//!
//! Layout: two zero bytes, a dtype byte (`0x08` = unsigned byte), a byte
//! holding the number of dimensions, then one big-endian `u32` per dimension
//! and finally the row-major payload.

use alloc::vec::Vec;

use super::{Dataset, Split};
use crate::error::{IdxError, Result};
use crate::numkernel::Matrix;

const DTYPE_U8: u8 = 0x08;

/// A decoded IDX tensor of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn read_u32(bytes: &[u8], at: usize, field: &'static str) -> Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            field,
            needed: at + 4,
            available: bytes.len(),
        })
}

/// Parses an unsigned-byte IDX tensor with exactly `ndim` dimensions.
pub fn parse_idx(bytes: &[u8], ndim: u8, field: &'static str) -> Result<IdxTensor, IdxError> {
    let magic = read_u32(bytes, 0, field)?;
    let expected = u32::from_be_bytes([0, 0, DTYPE_U8, ndim]);
    if magic != expected {
        return Err(IdxError::BadMagic {
            field,
            expected_ndim: ndim,
            found: magic,
        });
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for d in 0..ndim as usize {
        dims.push(read_u32(bytes, 4 + 4 * d, field)? as usize);
    }
    let header = 4 + 4 * ndim as usize;
    let payload: usize = dims.iter().product();
    let needed = header + payload;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            field,
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(IdxError::TrailingBytes {
            field,
            extra: bytes.len() - needed,
        });
    }
    Ok(IdxTensor {
        dims,
        data: bytes[header..].to_vec(),
    })
}

/// Builds a dataset from an image file (`ndim = 3`) and a label file
/// (`ndim = 1`). Pixels are flattened and scaled by `1/255`; the class count
/// is one more than the largest label.
pub fn dataset_from_idx(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset> {
    let images = parse_idx(images, 3, "images")?;
    let labels = parse_idx(labels, 1, "labels")?;
    let n = images.dims[0];
    if n != labels.dims[0] {
        return Err(IdxError::CountMismatch {
            images: n,
            labels: labels.dims[0],
        }
        .into());
    }
    let dim = images.dims[1] * images.dims[2];
    let pixels = images.data.iter().map(|&b| b as f64 / 255.0).collect();
    let inputs = Matrix::from_vec(n, dim, pixels)?;
    let labels: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    let class_count = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(inputs, labels, class_count, split)
}

/// Encodes an unsigned-byte IDX tensor.
pub fn encode_idx(dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + data.len());
    out.extend_from_slice(&[0, 0, DTYPE_U8, dims.len() as u8]);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}
