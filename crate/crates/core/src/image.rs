//! Grayscale working images, overlapping block enumeration and bilinear resizing.
//!
//! Pixel coordinates are `(row, col)`, zero-based, row-major. Moments use
//! `x = col` and `y = row`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether samples are quantized 8-bit values or full-precision reals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Depth {
    Integer8,
    Real,
}

/// Top-left pixel of a block or region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub row: usize,
    pub col: usize,
}

impl Origin {
    pub const fn new(row: usize, col: usize) -> Self {
        Origin { row, col }
    }

    pub fn euclidean(self, other: Origin) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt()
    }

    pub fn chebyshev(self, other: Origin) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

/// Axis-aligned rectangle of pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub const fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        Rect {
            row,
            col,
            height,
            width,
        }
    }

    pub fn square(origin: Origin, size: usize) -> Self {
        Rect::new(origin.row, origin.col, size, size)
    }

    pub fn origin(&self) -> Origin {
        Origin::new(self.row, self.col)
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn bottom(&self) -> usize {
        self.row + self.height
    }

    pub fn right(&self) -> usize {
        self.col + self.width
    }

    pub fn fits_in(&self, height: usize, width: usize) -> bool {
        self.height > 0 && self.width > 0 && self.bottom() <= height && self.right() <= width
    }

    pub fn contains(&self, p: Origin) -> bool {
        p.row >= self.row && p.row < self.bottom() && p.col >= self.col && p.col < self.right()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.row >= self.row
            && other.col >= self.col
            && other.bottom() <= self.bottom()
            && other.right() <= self.right()
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.row < other.bottom()
            && other.row < self.bottom()
            && self.col < other.right()
            && other.col < self.right()
    }

    pub fn intersection_area(&self, other: &Rect) -> usize {
        let top = self.row.max(other.row);
        let bottom = self.bottom().min(other.bottom());
        let left = self.col.max(other.col);
        let right = self.right().min(other.right());
        bottom.saturating_sub(top) * right.saturating_sub(left)
    }
}

/// Row-major luminance grid with samples in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    depth: Depth,
    samples: Vec<f64>,
}

impl GrayImage {
    /// Builds an integer8 image from 8-bit samples.
    pub fn from_u8(width: usize, height: usize, samples: &[u8]) -> Result<Self> {
        check_len(width, height, samples.len())?;
        Ok(GrayImage {
            width,
            height,
            depth: Depth::Integer8,
            samples: samples.iter().map(|&v| f64::from(v)).collect(),
        })
    }

    /// Builds a real-depth image; samples are clamped to `[0, 255]`.
    pub fn from_real(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        check_len(width, height, samples.len())?;
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::precondition("NaN sample"));
        }
        let samples = samples.into_iter().map(|v| v.clamp(0.0, 255.0)).collect();
        Ok(GrayImage {
            width,
            height,
            depth: Depth::Real,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            depth: Depth::Integer8,
            samples: vec![f64::from(value); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> Depth {
        self.depth
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.samples[row * self.width + col]
    }

    /// Writes one sample. Integer8 images round and clamp the value; real
    /// images clamp only.
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let v = match self.depth {
            Depth::Integer8 => round_half_away(value).clamp(0.0, 255.0),
            Depth::Real => value.clamp(0.0, 255.0),
        };
        self.samples[row * self.width + col] = v;
    }

    /// Integer samples, rounding half away from zero and clamping to `[0, 255]`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.samples
            .iter()
            .map(|&v| round_half_away(v).clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Integer8 samples of an integer8 image, or `None` for real depth.
    pub fn as_u8(&self) -> Option<Vec<u8>> {
        match self.depth {
            Depth::Integer8 => Some(self.samples.iter().map(|&v| v as u8).collect()),
            Depth::Real => None,
        }
    }

    /// Same samples, relabelled as real depth.
    pub fn into_real(mut self) -> Self {
        self.depth = Depth::Real;
        self
    }

    /// Rounds to an integer8 image.
    pub fn quantized(&self) -> Self {
        GrayImage {
            width: self.width,
            height: self.height,
            depth: Depth::Integer8,
            samples: self.to_u8().into_iter().map(f64::from).collect(),
        }
    }

    pub fn crop(&self, rect: Rect) -> Result<GrayImage> {
        if !rect.fits_in(self.height, self.width) {
            return Err(Error::precondition(format!(
                "rectangle {rect:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut samples = Vec::with_capacity(rect.area());
        for r in rect.row..rect.bottom() {
            let start = r * self.width + rect.col;
            samples.extend_from_slice(&self.samples[start..start + rect.width]);
        }
        Ok(GrayImage {
            width: rect.width,
            height: rect.height,
            depth: self.depth,
            samples,
        })
    }

    /// Copies `patch` into this image with its top-left pixel at `at`.
    pub fn paste(&mut self, patch: &GrayImage, at: Origin) -> Result<()> {
        let rect = Rect::new(at.row, at.col, patch.height, patch.width);
        if !rect.fits_in(self.height, self.width) {
            return Err(Error::precondition(format!(
                "patch {rect:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        if patch.depth == Depth::Real {
            self.depth = Depth::Real;
        }
        for r in 0..patch.height {
            let dst = (at.row + r) * self.width + at.col;
            self.samples[dst..dst + patch.width]
                .copy_from_slice(&patch.samples[r * patch.width..(r + 1) * patch.width]);
        }
        Ok(())
    }
}

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    match width.checked_mul(height) {
        None => Err(Error::DimensionOverflow {
            width: width as u64,
            height: height as u64,
        }),
        Some(n) if n != len => Err(Error::DimensionMismatch(format!(
            "{width}x{height} image needs {n} samples, got {len}"
        ))),
        Some(_) if width == 0 || height == 0 => {
            Err(Error::precondition("image dimensions must be non-zero"))
        }
        Some(_) => Ok(()),
    }
}

/// `f64::round` rounds half away from zero; kept as a named helper so the
/// rounding mode is explicit at call sites.
#[inline]
pub fn round_half_away(v: f64) -> f64 {
    v.round()
}

/// Luminance of an 8-bit RGB image (weights 0.299, 0.587, 0.114).
pub fn to_grayscale(rgb: &image::RgbImage) -> GrayImage {
    let samples: Vec<u8> = rgb
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
            round_half_away(y).clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::from_u8(rgb.width() as usize, rgb.height() as usize, &samples)
        .expect("rgb buffer is consistent with its dimensions")
}

/// A `size`×`size` window of an image together with its top-left pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub origin: Origin,
    pub size: usize,
    pub samples: Vec<f64>,
}

impl Block {
    pub fn extract(img: &GrayImage, origin: Origin, size: usize) -> Result<Block> {
        if size < 2 {
            return Err(Error::precondition("block size must be at least 2"));
        }
        let patch = img.crop(Rect::square(origin, size))?;
        Ok(Block {
            origin,
            size,
            samples: patch.samples,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.samples[row * self.size + col]
    }

    pub fn rect(&self) -> Rect {
        Rect::square(self.origin, self.size)
    }

    pub fn to_image(&self, depth: Depth) -> GrayImage {
        GrayImage {
            width: self.size,
            height: self.size,
            depth,
            samples: self.samples.clone(),
        }
    }
}

/// Origins of every overlapping `size`×`size` block, row-major.
pub fn block_origins(img: &GrayImage, size: usize) -> Result<Vec<Origin>> {
    check_block_size(img, size)?;
    let rows = img.height - size + 1;
    let cols = img.width - size + 1;
    Ok((0..rows)
        .flat_map(|r| (0..cols).map(move |c| Origin::new(r, c)))
        .collect())
}

pub(crate) fn check_block_size(img: &GrayImage, size: usize) -> Result<()> {
    if size < 2 {
        return Err(Error::precondition("block size must be at least 2"));
    }
    if size > img.width.min(img.height) {
        return Err(Error::precondition(format!(
            "block size {size} exceeds {}x{} image",
            img.width, img.height
        )));
    }
    Ok(())
}

/// Every overlapping `size`×`size` block, enumerated row-major by origin:
/// `(height − size + 1) · (width − size + 1)` blocks in total.
pub fn overlapping_blocks(img: &GrayImage, size: usize) -> Result<Vec<Block>> {
    block_origins(img, size)?
        .into_iter()
        .map(|o| Block::extract(img, o, size))
        .collect()
}

/// Name recorded in reports for the resize kernel.
pub const INTERPOLATION_KERNEL: &str = "bilinear-corner-aligned";

/// Output length for an input length scaled by `factor` percent, rounded
/// half away from zero.
pub fn scaled_dim(len: usize, factor: u32) -> usize {
    (len * factor as usize * 2 + 100) / 200
}

/// Input coordinate sampled by output index `u`.
///
/// Corner-aligned: `u · (in − 1) / (out − 1)`, so the first and last output
/// samples land exactly on the first and last input samples.
#[inline]
fn source_coord(u: usize, in_len: usize, out_len: usize) -> f64 {
    if out_len <= 1 {
        0.0
    } else {
        (u * (in_len - 1)) as f64 / (out_len - 1) as f64
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinear sample of `img` at output pixel `(u, v)` of an `out_h`×`out_w`
/// resize. A single output pixel depends only on its own coordinate, so a
/// full resize and a sparse evaluation agree bit for bit.
#[inline]
pub(crate) fn bilinear_at(img: &GrayImage, u: usize, v: usize, out_h: usize, out_w: usize) -> f64 {
    let y = source_coord(u, img.height, out_h);
    let x = source_coord(v, img.width, out_w);
    let r0 = y.floor() as usize;
    let c0 = x.floor() as usize;
    let r1 = (r0 + 1).min(img.height - 1);
    let c1 = (c0 + 1).min(img.width - 1);
    let fy = y - r0 as f64;
    let fx = x - c0 as f64;
    let top = lerp(img.get(r0, c0), img.get(r0, c1), fx);
    let bottom = lerp(img.get(r1, c0), img.get(r1, c1), fx);
    lerp(top, bottom, fy)
}

fn check_factor(img: &GrayImage, factor: u32) -> Result<(usize, usize)> {
    if factor < 10 {
        return Err(Error::precondition(format!(
            "rescale factor {factor}% is below the 10% minimum"
        )));
    }
    let out_h = scaled_dim(img.height, factor);
    let out_w = scaled_dim(img.width, factor);
    if out_h == 0 || out_w == 0 {
        return Err(Error::precondition(format!(
            "{}x{} image at {factor}% has an empty output",
            img.width, img.height
        )));
    }
    Ok((out_h, out_w))
}

/// Bilinear resize by `factor` percent with corner-aligned sample mapping.
///
/// The output is real depth. Factor 100 reproduces the input exactly and a
/// constant input stays exactly constant.
pub fn resize_bilinear(img: &GrayImage, factor: u32) -> Result<GrayImage> {
    let (out_h, out_w) = check_factor(img, factor)?;
    resize_to(img, out_h, out_w)
}

/// Bilinear resize to explicit output dimensions.
pub fn resize_to(img: &GrayImage, out_h: usize, out_w: usize) -> Result<GrayImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::precondition("resize output must be non-empty"));
    }
    let mut samples = Vec::with_capacity(out_h * out_w);
    for u in 0..out_h {
        for v in 0..out_w {
            samples.push(bilinear_at(img, u, v, out_h, out_w));
        }
    }
    Ok(GrayImage {
        width: out_w,
        height: out_h,
        depth: Depth::Real,
        samples,
    })
}

/// The four corner samples (top-left, top-right, bottom-left, bottom-right)
/// of `resize_bilinear(img, factor)` without materializing the full output.
pub fn resized_corners(img: &GrayImage, factor: u32) -> Result<[f64; 4]> {
    let (h, w) = check_factor(img, factor)?;
    Ok([
        bilinear_at(img, 0, 0, h, w),
        bilinear_at(img, 0, w - 1, h, w),
        bilinear_at(img, h - 1, 0, h, w),
        bilinear_at(img, h - 1, w - 1, h, w),
    ])
}

/// Per-pixel flags over an image (true = copied or moved).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width.checked_mul(height) != Some(bits.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} mask needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    /// Flags every pixel of `rect` that falls inside the mask.
    pub fn fill_rect(&mut self, rect: Rect) {
        let bottom = rect.bottom().min(self.height);
        let right = rect.right().min(self.width);
        for r in rect.row..bottom {
            for c in rect.col..right {
                self.bits[r * self.width + c] = true;
            }
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// 0/255 image for saving.
    pub fn to_image(&self) -> GrayImage {
        let samples: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage::from_u8(self.width, self.height, &samples).expect("mask dimensions are valid")
    }

    /// Pixels at or above mid-gray are flagged.
    pub fn from_image(img: &GrayImage) -> Self {
        BinaryMask {
            width: img.width,
            height: img.height,
            bits: img.samples.iter().map(|&v| v >= 128.0).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(width: usize, height: usize) -> GrayImage {
        let samples: Vec<u8> = (0..width * height).map(|i| (i * 7 % 256) as u8).collect();
        GrayImage::from_u8(width, height, &samples).unwrap()
    }

    #[test]
    fn grayscale_weights() {
        let mut rgb = image::RgbImage::new(3, 1);
        rgb.put_pixel(0, 0, image::Rgb([255, 255, 255]));
        rgb.put_pixel(1, 0, image::Rgb([0, 0, 0]));
        rgb.put_pixel(2, 0, image::Rgb([100, 100, 100]));
        let g = to_grayscale(&rgb);
        assert_eq!(g.to_u8(), vec![255, 0, 100]);
        assert_eq!(g.depth(), Depth::Integer8);
    }

    #[test]
    fn grayscale_is_idempotent() {
        let mut rgb = image::RgbImage::new(16, 16);
        for (i, p) in rgb.pixels_mut().enumerate() {
            *p = image::Rgb([(i * 3) as u8, (i * 11) as u8, (i * 5) as u8]);
        }
        let once = to_grayscale(&rgb);
        let back = image::RgbImage::from_fn(16, 16, |x, y| {
            let v = once.get(y as usize, x as usize) as u8;
            image::Rgb([v, v, v])
        });
        assert_eq!(to_grayscale(&back), once);
    }

    #[test]
    fn block_counts() {
        let img = GrayImage::filled(256, 256, 3);
        assert_eq!(block_origins(&img, 8).unwrap().len(), 62001);

        let img = ramp(4, 4);
        let blocks = overlapping_blocks(&img, 4).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].samples, img.samples());

        // 5 rows, 4 columns
        let img = ramp(4, 5);
        let origins: Vec<_> = block_origins(&img, 4).unwrap();
        assert_eq!(origins, vec![Origin::new(0, 0), Origin::new(1, 0)]);
    }

    #[test]
    fn block_larger_than_image() {
        let img = ramp(4, 5);
        assert!(matches!(
            overlapping_blocks(&img, 5),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn blocks_match_windows_and_tile_image() {
        let img = ramp(9, 7);
        let mut covered = vec![false; 63];
        for b in overlapping_blocks(&img, 3).unwrap() {
            for r in 0..3 {
                for c in 0..3 {
                    assert_eq!(b.get(r, c), img.get(b.origin.row + r, b.origin.col + c));
                    covered[(b.origin.row + r) * 9 + b.origin.col + c] = true;
                }
            }
        }
        assert!(covered.into_iter().all(|c| c));
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = ramp(7, 5);
        let same = resize_bilinear(&img, 100).unwrap();
        assert_eq!(same.samples(), img.samples());
        assert_eq!(same.depth(), Depth::Real);

        let flat = GrayImage::filled(4, 4, 37);
        for factor in (10..=500).step_by(10) {
            if let Ok(out) = resize_bilinear(&flat, factor) {
                assert!(out.samples().iter().all(|&v| v == 37.0), "factor {factor}");
            }
        }
    }

    #[test]
    fn resize_two_by_two_ramp() {
        let img = GrayImage::from_u8(2, 2, &[0, 255, 0, 255]).unwrap();
        let out = resize_bilinear(&img, 200).unwrap();
        assert_eq!((out.width(), out.height()), (4, 4));
        // Hand evaluation: column v samples input x = v/3, rows are identical.
        for u in 0..4 {
            for v in 0..4 {
                let x = v as f64 / 3.0;
                let y = u as f64 / 3.0;
                let (w00, w01, w10, w11) =
                    ((1.0 - y) * (1.0 - x), (1.0 - y) * x, y * (1.0 - x), y * x);
                let expected = w00 * 0.0 + w01 * 255.0 + w10 * 0.0 + w11 * 255.0;
                assert!((out.get(u, v) - expected).abs() < 1e-12);
            }
        }
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(3, 3), 255.0);
    }

    #[test]
    fn resize_factor_bounds() {
        let img = ramp(4, 4);
        assert!(matches!(resize_bilinear(&img, 5), Err(Error::Precondition(_))));
        // 4 px at 10% rounds to zero
        assert!(matches!(resize_bilinear(&img, 10), Err(Error::Precondition(_))));
        assert_eq!(scaled_dim(20, 170), 34);
        assert_eq!(scaled_dim(5, 50), 3);
    }

    #[test]
    fn corners_match_full_resize() {
        let img = ramp(5, 5).into_real();
        for factor in (20..=500).step_by(10) {
            let full = resize_bilinear(&img, factor).unwrap();
            let (h, w) = (full.height(), full.width());
            let corners = resized_corners(&img, factor).unwrap();
            assert_eq!(
                corners,
                [full.get(0, 0), full.get(0, w - 1), full.get(h - 1, 0), full.get(h - 1, w - 1)]
            );
            if h >= 2 && w >= 2 {
                assert_eq!(corners, [img.get(0, 0), img.get(0, 4), img.get(4, 0), img.get(4, 4)]);
            } else {
                assert_eq!(corners, [img.get(0, 0); 4]);
            }
        }
    }

    #[test]
    fn real_images_are_clamped() {
        let img = GrayImage::from_real(2, 1, vec![-3.0, 300.0]).unwrap();
        assert_eq!(img.samples(), &[0.0, 255.0]);
    }

    #[test]
    fn mask_roundtrip_through_image() {
        let mut m = BinaryMask::new(5, 4);
        m.fill_rect(Rect::new(1, 1, 2, 3));
        assert_eq!(m.count(), 6);
        assert_eq!(BinaryMask::from_image(&m.to_image()), m);
    }
}
