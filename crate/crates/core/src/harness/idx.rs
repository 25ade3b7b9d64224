//! Unsigned-byte IDX files: a big-endian magic `0x0000_08DD` (`DD` = number
//! of dimensions), one big-endian `u32` per dimension, then the raw bytes.

use std::path::Path;

use crate::error::{Error, Result};

const UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<u32>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn new(dims: Vec<u32>, data: Vec<u8>) -> Result<Self> {
        let expected: usize = dims.iter().map(|&d| d as usize).product();
        if dims.is_empty() || dims.len() > 255 || expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "IDX dims {dims:?} do not describe {} bytes",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn magic(&self) -> u32 {
        u32::from(UBYTE) << 8 | self.dims.len() as u32
    }

    /// Parses `bytes`; `path` only labels errors. Trailing bytes are rejected
    /// as a count mismatch of the payload.
    pub fn parse(bytes: &[u8], path: &Path, expected_dims: usize) -> Result<Self> {
        let expected_magic = u32::from(UBYTE) << 8 | expected_dims as u32;
        let truncated = |expected: usize| Error::IdxTruncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        };
        if bytes.len() < 4 {
            return Err(truncated(4));
        }
        let magic = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
        if magic != expected_magic {
            return Err(Error::IdxMagic {
                path: path.to_path_buf(),
                expected: expected_magic,
                found: magic,
            });
        }
        let header = 4 + 4 * expected_dims;
        if bytes.len() < header {
            return Err(truncated(header));
        }
        let dims: Vec<u32> = bytes[4..header]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let payload: usize = dims.iter().map(|&d| d as usize).product();
        if bytes.len() < header + payload {
            return Err(truncated(header + payload));
        }
        if bytes.len() > header + payload {
            return Err(Error::InvalidArgument(format!(
                "{}: {} trailing bytes after the IDX payload",
                path.display(),
                bytes.len() - header - payload
            )));
        }
        Ok(Self {
            dims,
            data: bytes[header..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend(self.magic().to_be_bytes());
        for d in &self.dims {
            out.extend(d.to_be_bytes());
        }
        out.extend(&self.data);
        out
    }

    pub fn read(path: &Path, expected_dims: usize) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&bytes, path, expected_dims)
    }
}

/// Reads an image file (3 dimensions) and a label file (1 dimension).
/// Returns pixels scaled to `[0, 1]`, one image per row, and the labels.
pub fn read_idx_pair(
    images_path: &Path,
    labels_path: &Path,
) -> Result<(usize, Vec<f64>, Vec<usize>)> {
    let images = IdxArray::read(images_path, 3)?;
    let labels = IdxArray::read(labels_path, 1)?;
    let (count, dim) = (
        images.dims[0] as usize,
        (images.dims[1] * images.dims[2]) as usize,
    );
    if count != labels.data.len() {
        return Err(Error::IdxCountMismatch {
            images: count,
            labels: labels.data.len(),
        });
    }
    let pixels = images.data.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((
        dim,
        pixels,
        labels.data.iter().map(|&l| usize::from(l)).collect(),
    ))
}
