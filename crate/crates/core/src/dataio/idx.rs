//! IDX file parsing (the MNIST on-disk format).
//!
//! Layout: two zero bytes, a dtype byte (0x08 = unsigned byte), a dimension
//! count byte, then one big-endian u32 size per dimension, then the raw
//! payload in row-major order.

use crate::error::{Error, Result};
use std::path::Path;

const IDX_DTYPE_U8: u8 = 0x08;

/// A parsed IDX tensor of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn len(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Product of all dimensions after the first (bytes per item).
    pub fn item_size(&self) -> usize {
        self.dims.iter().skip(1).product()
    }
}

pub fn load_idx(path: &Path) -> Result<IdxTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_idx(&bytes, path)
}

fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected: 4,
            actual: bytes.len(),
        });
    }
    let magic = &bytes[..4];
    if magic[0] != 0 || magic[1] != 0 || magic[2] != IDX_DTYPE_U8 {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "00 00 08 <ndims>".to_string(),
            found: format!("{:02x} {:02x} {:02x} {:02x}", magic[0], magic[1], magic[2], magic[3]),
        });
    }
    let ndims = magic[3] as usize;
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected: header_len,
            actual: bytes.len(),
        });
    }

    let mut dims = Vec::with_capacity(ndims);
    let mut payload_len: usize = 1;
    for d in 0..ndims {
        let start = 4 + 4 * d;
        let size = u32::from_be_bytes(bytes[start..start + 4].try_into().unwrap()) as usize;
        payload_len = payload_len.checked_mul(size).ok_or_else(|| Error::DimensionOverflow {
            path: path.to_path_buf(),
            detail: format!("dimension product overflows usize at dim {d} (size {size})"),
        })?;
        dims.push(size);
    }
    if ndims == 0 {
        payload_len = 0;
    }

    let actual = bytes.len() - header_len;
    if actual != payload_len {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected: payload_len,
            actual,
        });
    }

    Ok(IdxTensor {
        dims,
        data: bytes[header_len..].to_vec(),
    })
}

/// Writes an IDX tensor of unsigned bytes. Used by the toy-data tooling and
/// round-trip tests.
pub fn save_idx(tensor: &IdxTensor, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + tensor.data.len());
    out.extend_from_slice(&[0, 0, IDX_DTYPE_U8, tensor.dims.len() as u8]);
    for &d in &tensor.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("rbmgen-idx-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_small_tensor() {
        let tensor = IdxTensor {
            dims: vec![2, 3, 2],
            data: (0..12).collect(),
        };
        let path = tmp("roundtrip.idx");
        save_idx(&tensor, &path).unwrap();
        let loaded = load_idx(&path).unwrap();
        assert_eq!(loaded, tensor);
    }

    #[test]
    fn zero_item_tensor_keeps_declared_dims() {
        let tensor = IdxTensor {
            dims: vec![0, 28, 28],
            data: vec![],
        };
        let path = tmp("empty.idx");
        save_idx(&tensor, &path).unwrap();
        let loaded = load_idx(&path).unwrap();
        assert_eq!(loaded.dims, vec![0, 28, 28]);
        assert!(loaded.is_empty());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let path = tmp("badmagic.idx");
        std::fs::write(&path, [1u8, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let err = load_idx(&path).unwrap_err();
        assert!(matches!(err, Error::BadMagic { .. }), "got {err:?}");
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let mut bytes = vec![0u8, 0, 0x08, 1];
        bytes.extend_from_slice(&10u32.to_be_bytes());
        bytes.extend_from_slice(&[1, 2, 3]); // 3 of 10 payload bytes
        let path = tmp("truncated.idx");
        std::fs::write(&path, &bytes).unwrap();
        match load_idx(&path).unwrap_err() {
            Error::TruncatedPayload { expected, actual, .. } => {
                assert_eq!(expected, 10);
                assert_eq!(actual, 3);
            }
            other => panic!("expected TruncatedPayload, got {other:?}"),
        }
    }

    #[test]
    fn dimension_overflow_is_rejected() {
        let mut bytes = vec![0u8, 0, 0x08, 4];
        for _ in 0..4 {
            bytes.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        let path = tmp("overflow.idx");
        std::fs::write(&path, &bytes).unwrap();
        let err = load_idx(&path).unwrap_err();
        assert!(matches!(err, Error::DimensionOverflow { .. }), "got {err:?}");
    }
}
