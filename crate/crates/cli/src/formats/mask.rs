//! Label maps on disk: single-channel 8-bit PNG, or plain PGM (`P2`) for
//! hand-written fixtures.

use std::io::Cursor;
use std::path::Path;

use crosstask::mask::SemanticMask;
use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{CliError, Result};
use crate::io::{read_bytes, write_atomic};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Read a mask and check every label is background, ignore, or at most
/// `num_classes`.
pub fn read_mask(path: &Path, num_classes: u8) -> Result<SemanticMask> {
    let bytes = read_bytes(path)?;
    let mask = decode_mask(&bytes).map_err(|m| CliError::data(path, m))?;
    mask.validate(num_classes).map_err(|e| CliError::data(path, e.to_string()))?;
    Ok(mask)
}

pub fn decode_mask(bytes: &[u8]) -> std::result::Result<SemanticMask, String> {
    if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P2") {
        decode_pgm(bytes)
    } else {
        Err("unknown mask format (expected 8-bit grayscale PNG or plain PGM)".into())
    }
}

fn decode_png(bytes: &[u8]) -> std::result::Result<SemanticMask, String> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| e.to_string())?;
    let DynamicImage::ImageLuma8(gray) = img else {
        return Err(format!(
            "mask PNG must be single-channel 8-bit, found {:?}",
            img.color()
        ));
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    SemanticMask::new(w, h, gray.into_raw()).map_err(|e| e.to_string())
}

fn decode_pgm(bytes: &[u8]) -> std::result::Result<SemanticMask, String> {
    let text = std::str::from_utf8(bytes).map_err(|_| "PGM is not valid text".to_string())?;
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P2") {
        return Err("missing P2 header".into());
    }
    let mut header = |what: &str| -> std::result::Result<usize, String> {
        tokens
            .next()
            .ok_or_else(|| format!("PGM header ends before {what}"))?
            .parse()
            .map_err(|_| format!("bad PGM {what}"))
    };
    let width = header("width")?;
    let height = header("height")?;
    let maxval = header("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("PGM maxval {maxval} is not an 8-bit range"));
    }
    let mut labels = Vec::with_capacity(width * height);
    for (i, t) in tokens.enumerate() {
        let v: usize = t.parse().map_err(|_| format!("bad PGM value {t:?} at index {i}"))?;
        if v > maxval {
            return Err(format!("PGM value {v} at index {i} exceeds maxval {maxval}"));
        }
        labels.push(v as u8);
    }
    SemanticMask::new(width, height, labels).map_err(|e| e.to_string())
}

pub fn encode_mask(mask: &SemanticMask) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    PngEncoder::new(&mut out)
        .write_image(
            mask.labels(),
            mask.width() as u32,
            mask.height() as u32,
            ExtendedColorType::L8,
        )
        .expect("in-memory PNG encoding of a valid mask");
    out.into_inner()
}

pub fn write_mask(mask: &SemanticMask, path: &Path) -> Result<()> {
    write_atomic(path, &encode_mask(mask))
}
