//! 16-bit binary PGM (P5) export for single-channel maps.
//!
//! Values are mapped linearly from `[min, max]` onto `[0, 65535]`, clamped, and
//! written big-endian as the PGM standard requires for `maxval > 255`. The
//! mapping is recorded in a `#` comment line of the header so files are
//! self-describing.

use std::fs;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Shape4, Tensor4};

pub const MAXVAL: u16 = 65535;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl ValueRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::Domain(format!("invalid value range [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn quantize(&self, v: f64) -> u16 {
        let t = ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0);
        (t * MAXVAL as f64).round() as u16
    }

    pub fn dequantize(&self, q: u16) -> f64 {
        self.min + (self.max - self.min) * q as f64 / MAXVAL as f64
    }
}

/// Encode a `1x1xHxW` tensor as a 16-bit P5 image.
pub fn encode(t: &Tensor4, range: ValueRange) -> Result<Vec<u8>> {
    let s = t.shape();
    if s.n != 1 || s.c != 1 {
        return shape_err(format!("PGM export needs a 1x1xHxW tensor, got {s}"));
    }
    let header = format!(
        "P5\n# linear map [{:e}, {:e}] -> [0, {MAXVAL}]\n{} {}\n{MAXVAL}\n",
        range.min, range.max, s.w, s.h
    );
    let mut buf = header.into_bytes();
    buf.reserve(2 * t.len());
    for &v in t.data() {
        buf.extend_from_slice(&range.quantize(v).to_be_bytes());
    }
    Ok(buf)
}

pub fn write_pgm16(path: impl AsRef<Path>, t: &Tensor4, range: ValueRange) -> Result<()> {
    fs::write(path, encode(t, range)?)?;
    Ok(())
}

/// Parsed 16-bit PGM: raw samples plus the range recorded in the comment line, if any.
#[derive(Debug, Clone)]
pub struct Pgm16 {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u16>,
    pub range: Option<ValueRange>,
}

impl Pgm16 {
    pub fn to_tensor(&self, range: ValueRange) -> Tensor4 {
        let data = self.samples.iter().map(|&q| range.dequantize(q)).collect();
        Tensor4::from_vec(Shape4::new(1, 1, self.height, self.width), data)
            .expect("parsed dims are consistent")
    }
}

fn parse_err<T>(offset: usize, msg: &str) -> Result<T> {
    Err(Error::Format {
        offset: offset as u64,
        message: msg.to_string(),
    })
}

pub fn decode(bytes: &[u8]) -> Result<Pgm16> {
    if bytes.get(0..2) != Some(b"P5") {
        return parse_err(0, "not a P5 PGM");
    }
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    let mut range = None;
    while fields.len() < 3 {
        match bytes.get(pos) {
            None => return parse_err(pos, "truncated header"),
            Some(b'#') => {
                let end = bytes[pos..]
                    .iter()
                    .position(|&b| b == b'\n')
                    .map_or(bytes.len(), |e| pos + e);
                let line = String::from_utf8_lossy(&bytes[pos + 1..end]);
                range = range.or_else(|| parse_range_comment(&line));
                pos = end;
            }
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(_) => {
                let start = pos;
                while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                    pos += 1;
                }
                if start == pos {
                    return parse_err(pos, "unexpected header byte");
                }
                let v: usize = std::str::from_utf8(&bytes[start..pos])
                    .unwrap()
                    .parse()
                    .map_err(|_| Error::Format {
                        offset: start as u64,
                        message: "bad header number".into(),
                    })?;
                fields.push(v);
            }
        }
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != MAXVAL as usize {
        return parse_err(pos, "only 16-bit PGM (maxval 65535) is supported");
    }
    let need = pos + 2 * width * height;
    if bytes.len() < need {
        return parse_err(bytes.len(), "truncated raster");
    }
    let samples = bytes[pos..need]
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok(Pgm16 {
        width,
        height,
        samples,
        range,
    })
}

fn parse_range_comment(line: &str) -> Option<ValueRange> {
    let inner = line.split('[').nth(1)?.split(']').next()?;
    let mut it = inner.split(',').map(|s| s.trim().parse::<f64>());
    let min = it.next()?.ok()?;
    let max = it.next()?.ok()?;
    ValueRange::new(min, max).ok()
}

pub fn read_pgm16(path: impl AsRef<Path>) -> Result<Pgm16> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn range() -> ValueRange {
        ValueRange::new(0.1, 100.0).unwrap()
    }

    #[test]
    fn constant_extremes() {
        let s = Shape4::new(1, 1, 3, 4);
        let lo = decode(&encode(&Tensor4::full(s, 0.1), range()).unwrap()).unwrap();
        assert!(lo.samples.iter().all(|&q| q == 0));
        let hi = decode(&encode(&Tensor4::full(s, 100.0), range()).unwrap()).unwrap();
        assert!(hi.samples.iter().all(|&q| q == MAXVAL));
        assert_eq!((hi.width, hi.height), (4, 3));
        assert_eq!(hi.range, Some(range()));
    }

    #[test]
    fn round_trip_within_quantization() {
        let t = Tensor4::from_fn(Shape4::new(1, 1, 5, 7), |_, _, y, x| 0.1 + (y * 7 + x) as f64 * 2.7);
        let back = decode(&encode(&t, range()).unwrap()).unwrap().to_tensor(range());
        let span = 100.0 - 0.1;
        assert!(t.max_abs_diff(&back).unwrap() <= span / MAXVAL as f64);
    }

    #[test]
    fn big_endian_payload() {
        let t = Tensor4::full(Shape4::new(1, 1, 1, 1), 100.0);
        let bytes = encode(&t, range()).unwrap();
        assert_eq!(&bytes[bytes.len() - 2..], &[0xff, 0xff]);
        assert!(bytes.starts_with(b"P5\n#"));
    }

    #[test]
    fn rejects_multichannel() {
        let t = Tensor4::zeros(Shape4::new(1, 2, 2, 2));
        assert!(matches!(encode(&t, range()), Err(Error::Shape(_))));
    }
}
