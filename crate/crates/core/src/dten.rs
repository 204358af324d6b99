//! DTEN binary tensor files.
//!
//! Layout (little-endian throughout):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `b"DTEN"`                |
//! | 4      | 4    | version, u32 = 1               |
//! | 8      | 4    | rank, u32 = 4                  |
//! | 12     | 16   | dims n, c, h, w as u32         |
//! | 28     | 4·N  | payload, f32 in NCHW order     |
//!
//! Values are narrowed to `f32` on write and widened on read.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

pub const MAGIC: &[u8; 4] = b"DTEN";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

fn format_err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        offset: offset as u64,
        message: message.into(),
    })
}

pub fn encode(t: &Tensor4) -> Vec<u8> {
    let s = t.shape();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * t.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&4u32.to_le_bytes());
    for d in s.as_array() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_le_bytes(b.try_into().unwrap())),
        None => format_err(offset, "truncated header"),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Tensor4> {
    match bytes.get(0..4) {
        Some(m) if m == MAGIC => {}
        Some(m) => return format_err(0, format!("bad magic {:?}", String::from_utf8_lossy(m))),
        None => return format_err(0, "truncated header"),
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return format_err(4, format!("unsupported version {version}"));
    }
    let rank = read_u32(bytes, 8)?;
    if rank != 4 {
        return format_err(8, format!("unsupported rank {rank}, only rank 4 is supported"));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let off = 12 + 4 * i;
        *d = read_u32(bytes, off)? as usize;
        if *d == 0 {
            return format_err(off, "zero dimension");
        }
    }
    let shape = Shape4::new(dims[0], dims[1], dims[2], dims[3]);
    let need = shape
        .numel()
        .checked_mul(4)
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format {
            offset: 12,
            message: "dims overflow".into(),
        })?;
    if bytes.len() < need {
        return format_err(
            bytes.len(),
            format!("truncated payload: expected {need} bytes, found {}", bytes.len()),
        );
    }
    let data: Vec<f64> = bytes[HEADER_LEN..need]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return format_err(HEADER_LEN + 4 * i, "non-finite payload value");
    }
    Tensor4::from_vec(shape, data)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor4) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor4> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    #[test]
    fn round_trip_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.dten");
        let mut rng = SeedStream::new(7).rng("dten");
        let t = crate::rng::uniform_tensor(&mut rng, Shape4::new(2, 3, 4, 5), -3.0, 3.0);
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(*a as f32, *b as f32);
        }
        assert_eq!(fs::metadata(&path).unwrap().len() as usize, HEADER_LEN + 4 * 120);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = encode(&Tensor4::scalar(1.0));
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn rejects_rank_three() {
        let mut bytes = encode(&Tensor4::scalar(1.0));
        bytes[8..12].copy_from_slice(&3u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 8, .. })));
    }

    #[test]
    fn rejects_bad_version_and_truncation() {
        let t = Tensor4::full(Shape4::new(1, 1, 2, 2), 0.5);
        let mut bytes = encode(&t);
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 4, .. })));

        let bytes = encode(&t);
        let cut = &bytes[..bytes.len() - 3];
        match decode(cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, cut.len()),
            other => panic!("expected format error, got {other:?}"),
        }
        assert!(matches!(decode(&bytes[..10]), Err(Error::Format { .. })));
    }

    #[test]
    fn header_is_little_endian() {
        let t = Tensor4::full(Shape4::new(1, 2, 3, 258), 1.0);
        let bytes = encode(&t);
        assert_eq!(&bytes[0..4], b"DTEN");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[24..28], &[2, 1, 0, 0]);
        assert_eq!(&bytes[28..32], &1.0f32.to_le_bytes());
    }
}
