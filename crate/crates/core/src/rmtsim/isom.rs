//! Row-major binary matrix dumps: `"ISOM"`, version, rows, cols (u32 LE each),
//! then `f64` little-endian entries.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const ISOM_MAGIC: [u8; 4] = *b"ISOM";
pub const ISOM_VERSION: u32 = 1;

pub fn write_isom<W: Write>(mut out: W, a: &DMatrix<f64>) -> Result<()> {
    let dims = |n: usize| u32::try_from(n).map_err(|_| Error::invalid(format!("dimension {n} exceeds u32")));
    out.write_all(&ISOM_MAGIC)?;
    out.write_all(&ISOM_VERSION.to_le_bytes())?;
    out.write_all(&dims(a.nrows())?.to_le_bytes())?;
    out.write_all(&dims(a.ncols())?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * a.len());
    for row in a.row_iter() {
        for v in row.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_isom<R: Read>(mut input: R) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let header_err = |offset: usize, message: String| Error::InvalidArgument(format!("ISOM byte {offset}: {message}"));
    if bytes.len() < 16 {
        return Err(header_err(bytes.len(), format!("header needs 16 bytes, got {}", bytes.len())));
    }
    if bytes[..4] != ISOM_MAGIC {
        return Err(header_err(0, format!("bad magic {:?}", &bytes[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    if word(4) != ISOM_VERSION {
        return Err(header_err(4, format!("unsupported version {}", word(4))));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    let expected = 16 + 8 * rows * cols;
    if bytes.len() != expected {
        return Err(header_err(16, format!("expected {expected} bytes in total, got {}", bytes.len())));
    }
    let values = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    Ok(DMatrix::from_row_iterator(rows, cols, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, -0.5]);
        let mut buf = Vec::new();
        write_isom(&mut buf, &a).unwrap();
        assert_eq!(buf.len(), 16 + 48);
        assert_eq!(&buf[..4], b"ISOM");
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 2.0);
        assert_eq!(read_isom(&buf[..]).unwrap(), a);
        assert!(read_isom(&buf[..40]).is_err());
    }
}
