//! IDX tensors (the MNIST family format): big-endian magic `0x0000 08 nd`,
//! `nd` big-endian u32 sizes, then unsigned bytes.

use std::path::Path;

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const UBYTE: u8 = 0x08;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    /// Length of one item, the product of all sizes after the first.
    pub fn item_len(&self) -> usize {
        self.dims[1..].iter().product()
    }

    pub fn item(&self, i: usize) -> &[u8] {
        let n = self.item_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn len(&self) -> usize {
        self.dims[0]
    }

    pub fn is_empty(&self) -> bool {
        self.dims[0] == 0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0, 0, UBYTE, self.dims.len() as u8];
        for d in &self.dims {
            out.extend_from_slice(&(*d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

fn idx_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Idx {
        offset,
        message: message.into(),
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(idx_err(bytes.len(), format!("need a 4-byte magic, file has {} bytes", bytes.len())));
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(idx_err(0, format!("bad magic {magic:#010x}")));
    }
    if bytes[2] != UBYTE {
        return Err(idx_err(2, format!("unsupported element type {:#04x}, only unsigned bytes", bytes[2])));
    }
    let nd = bytes[3] as usize;
    if nd == 0 {
        return Err(idx_err(3, "zero dimensions"));
    }
    let header = 4 + 4 * nd;
    if bytes.len() < header {
        return Err(idx_err(bytes.len(), format!("header needs {header} bytes, file has {}", bytes.len())));
    }
    let dims: Vec<usize> = (0..nd)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize)
        .collect();
    let payload = dims.iter().try_fold(1usize, |acc, d| acc.checked_mul(*d));
    let payload = payload.ok_or_else(|| idx_err(4, "dimension product overflows"))?;
    let actual = bytes.len() - header;
    if actual != payload {
        return Err(idx_err(
            header,
            format!("expected {payload} payload bytes, found {actual}"),
        ));
    }
    Ok(IdxTensor {
        dims,
        data: bytes[header..].to_vec(),
    })
}

/// Reads and parses an IDX file, optionally requiring a specific magic.
pub fn load_idx(path: &Path, expected_magic: Option<u32>) -> Result<IdxTensor> {
    let bytes = std::fs::read(path)?;
    if let Some(m) = expected_magic {
        if bytes.len() >= 4 && u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) != m {
            return Err(idx_err(0, format!("expected magic {m:#010x} in {}", path.display())));
        }
    }
    parse_idx(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_round_trip() {
        let t = IdxTensor {
            dims: vec![4, 2, 2],
            data: (0..16).collect(),
        };
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], &IDX_IMAGES_MAGIC.to_be_bytes());
        let back = parse_idx(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.item(3), &[12, 13, 14, 15]);
    }

    #[test]
    fn labels_and_errors() {
        let t = IdxTensor {
            dims: vec![3],
            data: vec![1, 0, 9],
        };
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], &IDX_LABELS_MAGIC.to_be_bytes());
        assert_eq!(parse_idx(&bytes).unwrap().data, vec![1, 0, 9]);

        let err = parse_idx(&bytes[..bytes.len() - 1]).unwrap_err().to_string();
        assert!(err.contains("expected 3") && err.contains("found 2"), "{err}");
        let mut bad = bytes.clone();
        bad[0] = 1;
        assert!(matches!(parse_idx(&bad), Err(Error::Idx { offset: 0, .. })));
    }
}
