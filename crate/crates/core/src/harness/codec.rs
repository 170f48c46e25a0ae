//! Binary PGM (`P5`, maxval 255) masks and the `PMAP1` probability-map format.
//!
//! `PMAP1` layout: the bytes `PMAP1\n`, the ASCII line `<height> <width>\n`,
//! then `height * width` little-endian `f32` values in row-major order.

use std::fs;
use std::path::Path;

use super::{HarnessError, HarnessResult};
use crate::grid::{BinaryMask, ProbMap};

/// Largest accepted pixel count for either format.
pub const MAX_PIXELS: u64 = 1 << 30;

pub const PMAP_MAGIC: &[u8] = b"PMAP1\n";

fn read_bytes(path: &Path) -> HarnessResult<Vec<u8>> {
    fs::read(path).map_err(|e| HarnessError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> HarnessResult<()> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn malformed(path: &Path, reason: impl Into<String>) -> HarnessError {
    HarnessError::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn checked_pixels(path: &Path, height: u64, width: u64) -> HarnessResult<usize> {
    if height == 0 || width == 0 {
        return Err(malformed(path, "zero dimension"));
    }
    match height.checked_mul(width) {
        Some(n) if n <= MAX_PIXELS => Ok(n as usize),
        _ => Err(HarnessError::DimensionOverflow {
            path: path.to_path_buf(),
            height,
            width,
        }),
    }
}

/// Reads whitespace-separated header tokens, skipping `#` comments. Returns the
/// tokens and the offset just past the single whitespace byte that ends the
/// last one.
fn pgm_header(path: &Path, bytes: &[u8]) -> HarnessResult<([u64; 3], usize)> {
    if !bytes.starts_with(b"P5") {
        return Err(HarnessError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed(path, "header ends early")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "expected a decimal number"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| malformed(path, format!("number `{text}` is too large")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => Ok((fields, pos + 1)),
        _ => Err(malformed(path, "header must end with one whitespace byte")),
    }
}

/// Decodes a binary PGM; pixels above 127 are foreground.
pub fn decode_mask(path: &Path, bytes: &[u8]) -> HarnessResult<BinaryMask> {
    let ([width, height, maxval], offset) = pgm_header(path, bytes)?;
    if maxval != 255 {
        return Err(HarnessError::UnsupportedMaxval {
            path: path.to_path_buf(),
            maxval,
        });
    }
    let n = checked_pixels(path, height, width)?;
    let payload = &bytes[offset..];
    if payload.len() < n {
        return Err(HarnessError::Truncated {
            path: path.to_path_buf(),
            expected: n,
            found: payload.len(),
        });
    }
    let pixels = payload[..n].iter().map(|&b| u8::from(b > 127)).collect();
    Ok(BinaryMask::new(height as usize, width as usize, pixels)?)
}

pub fn encode_mask(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(
        mask.pixels()
            .iter()
            .map(|&v| if v != 0 { 255u8 } else { 0 }),
    );
    out
}

pub fn read_mask(path: impl AsRef<Path>) -> HarnessResult<BinaryMask> {
    let path = path.as_ref();
    decode_mask(path, &read_bytes(path)?)
}

pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> HarnessResult<()> {
    write_bytes(path.as_ref(), &encode_mask(mask))
}

pub fn decode_probmap(path: &Path, bytes: &[u8]) -> HarnessResult<ProbMap> {
    let rest = bytes
        .strip_prefix(PMAP_MAGIC)
        .ok_or_else(|| HarnessError::BadMagic {
            path: path.to_path_buf(),
        })?;
    let eol = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| malformed(path, "missing dimension line"))?;
    let line = std::str::from_utf8(&rest[..eol])
        .map_err(|_| malformed(path, "non-ASCII dimension line"))?;
    let dims: Vec<&str> = line.split(' ').collect();
    let [h, w] = dims.as_slice() else {
        return Err(malformed(
            path,
            format!("expected `<height> <width>`, got `{line}`"),
        ));
    };
    let parse = |s: &str| {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed(path, format!("bad dimension `{s}`")));
        }
        s.parse::<u64>()
            .map_err(|_| malformed(path, format!("dimension `{s}` is too large")))
    };
    let (height, width) = (parse(h)?, parse(w)?);
    let n = checked_pixels(path, height, width)?;
    let payload = &rest[eol + 1..];
    if payload.len() < n * 4 {
        return Err(HarnessError::Truncated {
            path: path.to_path_buf(),
            expected: n * 4,
            found: payload.len(),
        });
    }
    let mut values = Vec::with_capacity(n);
    for (index, chunk) in payload[..n * 4].chunks_exact(4).enumerate() {
        let value = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !(0.0..=1.0).contains(&value) {
            return Err(HarnessError::ValueOutOfRange {
                path: path.to_path_buf(),
                index,
                value,
            });
        }
        values.push(f64::from(value));
    }
    Ok(ProbMap::new(height as usize, width as usize, values)?)
}

/// Values are stored as `f32`; maps whose values are `f32`-representable
/// round-trip bit-exactly.
pub fn encode_probmap(p: &ProbMap) -> Vec<u8> {
    let mut out = PMAP_MAGIC.to_vec();
    out.extend(format!("{} {}\n", p.height(), p.width()).into_bytes());
    for &v in p.values() {
        out.extend_from_slice(&(v.clamp(0.0, 1.0) as f32).to_le_bytes());
    }
    out
}

pub fn read_probmap(path: impl AsRef<Path>) -> HarnessResult<ProbMap> {
    let path = path.as_ref();
    decode_probmap(path, &read_bytes(path)?)
}

pub fn write_probmap(p: &ProbMap, path: impl AsRef<Path>) -> HarnessResult<()> {
    write_bytes(path.as_ref(), &encode_probmap(p))
}

/// Reads a prediction: `PMAP1` for `.pmap` files, otherwise a PGM mask.
pub fn read_prediction(path: impl AsRef<Path>) -> HarnessResult<ProbMap> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "pmap") {
        read_probmap(path)
    } else {
        Ok(read_mask(path)?.to_probmap())
    }
}
