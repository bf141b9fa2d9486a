//! Dense field files: three little-endian `u64` (width, height, channels)
//! followed by `width * height * channels` little-endian `f64` values in
//! `(y, x, channel)` order.

use std::path::Path;

use crosstask::losses::Field;

use crate::error::{CliError, Result};
use crate::io::{read_bytes, write_atomic};

const HEADER: usize = 24;

pub fn encode_field(field: &Field) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + field.data().len() * 8);
    for v in [field.width(), field.height(), field.channels()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for v in field.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> std::result::Result<Field, String> {
    if bytes.len() < HEADER {
        return Err(format!("{} bytes is shorter than the {HEADER}-byte header", bytes.len()));
    }
    let dim = |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8-byte slice"));
    let (w, h, c) = (dim(0), dim(1), dim(2));
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| format!("header {w}x{h}x{c} overflows"))?;
    let payload = (bytes.len() - HEADER) as u64;
    if payload != expected {
        return Err(format!("header {w}x{h}x{c} needs {expected} payload bytes, found {payload}"));
    }
    let data = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Field::new(w as usize, h as usize, c as usize, data).map_err(|e| e.to_string())
}

pub fn read_field(path: &Path) -> Result<Field> {
    decode_field(&read_bytes(path)?).map_err(|m| CliError::data(path, m))
}

pub fn write_field(field: &Field, path: &Path) -> Result<()> {
    write_atomic(path, &encode_field(field))
}
