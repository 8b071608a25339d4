use std::fs;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::ComplexField;

/// File signature of the binary field format.
pub const FIELD_MAGIC: [u8; 16] = *b"PSMFIELD\x00\x01\x00\x00\x00\x00\x00\x00";

const HEADER_LEN: usize = 16 + 4 + 4 + 8;

/// Little-endian encoding: magic, `u32` height, `u32` width, `f64` pitch,
/// then row-major interleaved `f32` real and imaginary parts.
pub fn encode_field(field: &ComplexField) -> Vec<u8> {
    let (h, w) = field.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + h * w * 8);
    out.extend_from_slice(&FIELD_MAGIC);
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&field.pixel_pitch().to_le_bytes());
    for z in field.data().iter() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

/// Inverse of [`encode_field`]; `path` only labels errors.
pub fn decode_field(bytes: &[u8], path: &Path) -> Result<ComplexField> {
    if bytes.len() < HEADER_LEN || bytes[..16] != FIELD_MAGIC {
        return Err(Error::format(path, "missing PSMFIELD signature"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (h, w) = (u32_at(16), u32_at(20));
    let pitch = f64::from_le_bytes(bytes[24..32].try_into().expect("8 bytes"));
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(Error::format(
            path,
            format!("{h}x{w} header does not match {} bytes of data", bytes.len()),
        ));
    }
    let f32_at = |i: usize| f32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as f64;
    let data = Array2::from_shape_fn((h, w), |(r, c)| {
        let i = HEADER_LEN + (r * w + c) * 8;
        Complex64::new(f32_at(i), f32_at(i + 4))
    });
    ComplexField::new(data, pitch).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_field(path: impl AsRef<Path>, field: &ComplexField) -> Result<()> {
    fs::write(path, encode_field(field))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ComplexField> {
    let path = path.as_ref();
    decode_field(&fs::read(path)?, path)
}

/// Row-major little-endian `f32` image without header.
pub fn encode_image(image: &Array2<f64>) -> Vec<u8> {
    image.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
}

pub fn decode_image(bytes: &[u8], dim: (usize, usize), path: &Path) -> Result<Array2<f64>> {
    if bytes.len() != dim.0 * dim.1 * 4 {
        return Err(Error::format(
            path,
            format!("expected {} bytes for a {}x{} image, found {}", dim.0 * dim.1 * 4, dim.0, dim.1, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Array2::from_shape_vec(dim, values).map_err(|e| Error::format(path, e.to_string()))
}
