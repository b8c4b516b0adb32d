//! Image file I/O: binary PGM (P5, maxval 255), 8-bit PNG, and a lossless
//! real-depth sidecar.
//!
//! Sidecar layout (`.f64`): magic `CMFDF64\0`, width and height as
//! little-endian `u32`, then `width * height` little-endian `f64` samples in
//! row-major order.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{to_grayscale, BinaryMask, Depth, GrayImage};

pub const SIDECAR_MAGIC: &[u8; 8] = b"CMFDF64\0";
const PNG_MAGIC: &[u8; 8] = b"\x89PNG\r\n\x1a\n";
/// Largest pixel count accepted from a file header.
pub const MAX_PIXELS: u64 = 1 << 28;

/// Loads an image, dispatching on the file's magic bytes.
///
/// PGM and PNG inputs are integer8; sidecar inputs are real depth. RGB PNGs
/// are converted to luminance.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else if bytes.starts_with(SIDECAR_MAGIC) {
        decode_sidecar(bytes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        Err(Error::UnsupportedFormat(format!(
            "netpbm variant P{} (only binary P5 is supported)",
            bytes[1] as char
        )))
    } else {
        Err(Error::UnsupportedFormat(
            "expected PGM (P5), PNG or f64 sidecar".into(),
        ))
    }
}

/// Saves by extension: `.pgm`, `.png` or `.f64`. Real-depth images are
/// rounded and clamped for the 8-bit formats.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match extension(path).as_deref() {
        Some("pgm") => encode_pgm(img),
        Some("png") => encode_png(img)?,
        Some("f64") => encode_sidecar(img),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "cannot save with extension {:?}",
                other.unwrap_or("")
            )))
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    save_image(&mask.to_image(), path)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    Ok(BinaryMask::from_image(&load_image(path)?))
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

fn checked_dims(width: u64, height: u64) -> Result<(usize, usize)> {
    match width.checked_mul(height) {
        Some(n) if n <= MAX_PIXELS => {}
        _ => return Err(Error::DimensionOverflow { width, height }),
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("zero dimension {width}x{height}")));
    }
    Ok((width as usize, height as usize))
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("non-numeric PGM header field".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::Format(format!("PGM header field {text} out of range")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PGM maxval {maxval} (only 255 is supported)"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("missing whitespace after PGM header".into()));
    }
    pos += 1;
    let (w, h) = checked_dims(width, height)?;
    let data = &bytes[pos..];
    if data.len() < w * h {
        return Err(Error::Format(format!(
            "PGM raster truncated: expected {} bytes, found {}",
            w * h,
            data.len()
        )));
    }
    GrayImage::from_u8(w, h, &data[..w * h])
}

fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    out
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let mut reader = image::ImageReader::new(Cursor::new(bytes));
    reader.set_format(image::ImageFormat::Png);
    let mut limits = image::Limits::default();
    limits.max_alloc = Some(MAX_PIXELS * 4);
    reader.limits(limits);
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Limits(_) => Error::DimensionOverflow {
            width: 0,
            height: 0,
        },
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::Format(other.to_string()),
    })?;
    let (w, h) = (decoded.width() as u64, decoded.height() as u64);
    checked_dims(w, h)?;
    use image::DynamicImage as D;
    match decoded {
        D::ImageLuma8(g) => GrayImage::from_u8(w as usize, h as usize, g.as_raw()),
        D::ImageRgb8(rgb) => Ok(to_grayscale(&rgb)),
        D::ImageLumaA8(_) | D::ImageRgba8(_) => Ok(to_grayscale(&decoded.to_rgb8())),
        other => Err(Error::UnsupportedFormat(format!(
            "PNG color type {:?} (only 8-bit gray or RGB)",
            other.color()
        ))),
    }
}

fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.to_u8())
        .ok_or_else(|| Error::DimensionOverflow {
            width: img.width() as u64,
            height: img.height() as u64,
        })?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(out.into_inner())
}

fn decode_sidecar(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 16 {
        return Err(Error::Format("truncated sidecar header".into()));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let (w, h) = checked_dims(u64::from(width), u64::from(height))?;
    let data = &bytes[16..];
    if data.len() != w * h * 8 {
        return Err(Error::Format(format!(
            "sidecar raster has {} bytes, expected {}",
            data.len(),
            w * h * 8
        )));
    }
    let samples: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if samples.iter().any(|v| !(0.0..=255.0).contains(v)) {
        return Err(Error::Format("sidecar sample outside [0, 255]".into()));
    }
    GrayImage::from_real(w, h, samples)
}

fn encode_sidecar(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.samples().len() * 8);
    out.extend_from_slice(SIDECAR_MAGIC);
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    for v in img.samples() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Preferred file extension for an image of this depth.
pub fn natural_extension(depth: Depth) -> &'static str {
    match depth {
        Depth::Integer8 => "png",
        Depth::Real => "f64",
    }
}
