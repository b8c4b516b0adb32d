//! Ground-truth forgery synthesis and seeded corpora.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::size_bucket;
use crate::image::{resize_bilinear, scaled_dim, BinaryMask, Depth, GrayImage, Origin, Rect};
use crate::io::{natural_extension, save_image, save_mask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeryKind {
    CopyMove,
    CopyRescaleMove,
    IntensityVaried,
    MultiClone,
}

impl std::str::FromStr for ForgeryKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "copy_move" => Ok(ForgeryKind::CopyMove),
            "copy_rescale_move" => Ok(ForgeryKind::CopyRescaleMove),
            "intensity_varied" => Ok(ForgeryKind::IntensityVaried),
            "multi_clone" => Ok(ForgeryKind::MultiClone),
            _ => Err(format!("unknown forgery kind `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneSpec {
    pub dest: Origin,
    pub offset: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgerySpec {
    pub kind: ForgeryKind,
    pub source_rect: Rect,
    pub dest_origin: Origin,
    /// Percent; rescale kind only.
    pub scale_factor: Option<u32>,
    /// Added to every pasted sample; intensity kind only.
    pub offset: Option<i32>,
    /// Multi-clone kind only; applied in order.
    pub clone_list: Vec<CloneSpec>,
    /// Round pasted samples to 8 bits. Only affects the rescale kind, whose
    /// interpolated samples are otherwise kept at real depth.
    pub quantize_output: bool,
}

impl ForgerySpec {
    /// Every pasted rectangle, in paste order.
    pub fn dest_rects(&self) -> Result<Vec<Rect>> {
        let s = self.source_rect;
        let at = self.dest_origin;
        Ok(match self.kind {
            ForgeryKind::CopyMove | ForgeryKind::IntensityVaried => {
                vec![Rect::new(at.row, at.col, s.height, s.width)]
            }
            ForgeryKind::CopyRescaleMove => {
                let f = self
                    .scale_factor
                    .ok_or_else(|| Error::precondition("rescale forgery without a scale factor"))?;
                if f < 10 {
                    return Err(Error::precondition(format!("rescale factor {f}% is below 10%")));
                }
                let (h, w) = (scaled_dim(s.height, f), scaled_dim(s.width, f));
                if h == 0 || w == 0 {
                    return Err(Error::precondition("rescaled region is empty"));
                }
                vec![Rect::new(at.row, at.col, h, w)]
            }
            ForgeryKind::MultiClone => {
                if self.clone_list.is_empty() {
                    return Err(Error::precondition("multi-clone forgery without clones"));
                }
                self.clone_list
                    .iter()
                    .map(|c| Rect::new(c.dest.row, c.dest.col, s.height, s.width))
                    .collect()
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Source ∪ destination pixels.
    pub mask: BinaryMask,
    pub spec: ForgerySpec,
    /// Some pasted sample left `[0, 255]` and was clamped.
    pub clamped: bool,
}

fn offset_patch(patch: &GrayImage, offset: i32) -> Result<(GrayImage, bool)> {
    let k = f64::from(offset);
    let clamped = patch.samples().iter().any(|&v| !(0.0..=255.0).contains(&(v + k)));
    let shifted: Vec<f64> = patch
        .samples()
        .iter()
        .map(|&v| (v + k).clamp(0.0, 255.0))
        .collect();
    let out = match patch.depth() {
        Depth::Integer8 => {
            let px: Vec<u8> = shifted.iter().map(|&v| v as u8).collect();
            GrayImage::from_u8(patch.width(), patch.height(), &px)?
        }
        Depth::Real => GrayImage::from_real(patch.width(), patch.height(), shifted)?,
    };
    Ok((out, clamped))
}

pub fn synthesize(base: &GrayImage, spec: &ForgerySpec) -> Result<(GrayImage, GroundTruth)> {
    let (h, w) = (base.height(), base.width());
    let src = spec.source_rect;
    if src.area() == 0 || !src.fits_in(h, w) {
        return Err(Error::precondition(format!("source {src:?} outside {w}x{h} image")));
    }
    let dests = spec.dest_rects()?;
    if let Some(d) = dests.iter().find(|d| !d.fits_in(h, w)) {
        return Err(Error::precondition(format!("destination {d:?} outside {w}x{h} image")));
    }
    let mut out = base.clone();
    let mut clamped = false;
    match spec.kind {
        ForgeryKind::CopyMove => out.paste(&base.crop(src)?, spec.dest_origin)?,
        ForgeryKind::CopyRescaleMove => {
            let f = spec.scale_factor.unwrap_or(100);
            let mut patch = resize_bilinear(&base.crop(src)?, f)?;
            if spec.quantize_output {
                patch = patch.quantized();
            } else if patch.depth() == Depth::Integer8 {
                patch = patch.into_real();
            }
            out.paste(&patch, spec.dest_origin)?;
        }
        ForgeryKind::IntensityVaried => {
            let (patch, c) = offset_patch(&base.crop(src)?, spec.offset.unwrap_or(0))?;
            clamped = c;
            out.paste(&patch, spec.dest_origin)?;
        }
        ForgeryKind::MultiClone => {
            for clone in &spec.clone_list {
                let (patch, c) = offset_patch(&out.crop(src)?, clone.offset)?;
                clamped |= c;
                out.paste(&patch, clone.dest)?;
            }
        }
    }
    let mut mask = BinaryMask::new(w, h);
    mask.fill_rect(src);
    for d in &dests {
        mask.fill_rect(*d);
    }
    Ok((
        out,
        GroundTruth {
            mask,
            spec: spec.clone(),
            clamped,
        },
    ))
}

/// Deterministic generator for image `index` of a corpus seeded with `seed`.
pub fn image_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Smooth field in `[0, 1]`: a random linear gradient plus two octaves of
/// bilinear value noise.
fn smooth_field(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Vec<f64> {
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dy, dx) = angle.sin_cos();
    let span = (width + height) as f64;
    let octave = |rng: &mut ChaCha8Rng, cell: usize| {
        let gw = width / cell + 2;
        let gh = height / cell + 2;
        let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen::<f64>()).collect();
        move |r: usize, c: usize| {
            let (gy, gx) = (r / cell, c / cell);
            let ty = (r % cell) as f64 / cell as f64;
            let tx = (c % cell) as f64 / cell as f64;
            let at = |y: usize, x: usize| grid[y * gw + x];
            let top = at(gy, gx) + tx * (at(gy, gx + 1) - at(gy, gx));
            let bot = at(gy + 1, gx) + tx * (at(gy + 1, gx + 1) - at(gy + 1, gx));
            top + ty * (bot - top)
        }
    };
    let coarse = octave(rng, 64);
    let fine = octave(rng, 16);
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let g = 0.5 + (dx * c as f64 + dy * r as f64) / (2.0 * span);
            out.push(0.4 * g + 0.4 * coarse(r, c) + 0.2 * fine(r, c));
        }
    }
    out
}

/// Integer8 texture with samples in `[20, 150]`, so any offset up to +100
/// stays unsaturated.
pub fn integer_base(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Result<GrayImage> {
    let field = smooth_field(rng, width, height);
    let px: Vec<u8> = field
        .iter()
        .map(|&f| (20.0 + (100.0 * f).round()) as u8 + rng.gen_range(0..=30u8))
        .collect();
    GrayImage::from_u8(width, height, &px)
}

/// Real-depth texture with samples in `[40, 200]` and no repeated values in
/// practice.
pub fn real_base(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Result<GrayImage> {
    let field = smooth_field(rng, width, height);
    let samples: Vec<f64> = field
        .iter()
        .map(|&f| 40.0 + 140.0 * f + 20.0 * rng.gen::<f64>())
        .collect();
    GrayImage::from_real(width, height, samples)
}

/// Clean base image `index` of a corpus, at the depth used for `kind`.
pub fn base_image(seed: u64, index: u64, kind: ForgeryKind, width: usize, height: usize) -> Result<GrayImage> {
    let mut rng = image_rng(seed, index);
    match kind {
        ForgeryKind::CopyRescaleMove => real_base(&mut rng, width, height),
        _ => integer_base(&mut rng, width, height),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub count: usize,
    pub kind: ForgeryKind,
    /// Destination area as a percentage of the image; images cycle through the list.
    pub sizes: Vec<u32>,
    pub width: usize,
    pub height: usize,
    /// Rescale kind: factors cycled with the sizes.
    pub factors: Vec<u32>,
    /// Intensity kinds draw offsets uniformly from `1..=max_offset`.
    pub max_offset: i32,
    /// Multi-clone kind: clones per image, sharing the destination area.
    pub clones: usize,
    /// Rescale kind only; see [`ForgerySpec::quantize_output`].
    pub quantize_output: bool,
}

impl CorpusConfig {
    pub fn new(kind: ForgeryKind, seed: u64, count: usize) -> Self {
        CorpusConfig {
            seed,
            count,
            kind,
            sizes: vec![10, 20, 30, 40],
            width: 256,
            height: 256,
            factors: vec![50, 170, 250, 300],
            max_offset: 100,
            clones: 2,
            quantize_output: false,
        }
    }
}

/// Manifest record: the forgery spec plus file names and realized size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub mask: String,
    #[serde(flatten)]
    pub spec: ForgerySpec,
    pub size_pct: f64,
    pub size_bucket_pct: u32,
    pub clamped: bool,
}

/// Height and width of a region with roughly `area` pixels: square when
/// possible, else as wide as the canvas allows.
fn region_dims(area: f64, wide: bool, width: usize) -> (usize, usize) {
    let w = if wide {
        width.saturating_sub(16).max(2)
    } else {
        (area.sqrt().round() as usize).max(2)
    };
    let h = ((area / w as f64).round() as usize).max(2);
    (h, w)
}

/// Places rectangles of the given sizes at pairwise disjoint positions.
fn place(rng: &mut ChaCha8Rng, dims: &[(usize, usize)], height: usize, width: usize) -> Option<Vec<Rect>> {
    if dims.iter().any(|&(h, w)| h > height || w > width) {
        return None;
    }
    'attempt: for _ in 0..20_000 {
        let mut rects: Vec<Rect> = Vec::with_capacity(dims.len());
        for &(h, w) in dims {
            let r = Rect::new(rng.gen_range(0..=height - h), rng.gen_range(0..=width - w), h, w);
            if rects.iter().any(|o| o.intersects(&r)) {
                continue 'attempt;
            }
            rects.push(r);
        }
        return Some(rects);
    }
    None
}

/// Draws a forgery whose destination area approximates `size_pct` percent.
pub fn random_spec(
    rng: &mut ChaCha8Rng,
    cfg: &CorpusConfig,
    size_pct: u32,
    factor: u32,
) -> Result<ForgerySpec> {
    let (height, width) = (cfg.height, cfg.width);
    let area = f64::from(size_pct) / 100.0 * (width * height) as f64;
    for wide in [false, true] {
        let spec = match cfg.kind {
            ForgeryKind::CopyMove | ForgeryKind::IntensityVaried => {
                let dims = region_dims(area, wide, width);
                place(rng, &[dims, dims], height, width).map(|r| ForgerySpec {
                    kind: cfg.kind,
                    source_rect: r[0],
                    dest_origin: r[1].origin(),
                    scale_factor: None,
                    offset: (cfg.kind == ForgeryKind::IntensityVaried)
                        .then(|| rng.gen_range(1..=cfg.max_offset.max(1))),
                    clone_list: Vec::new(),
                    quantize_output: cfg.quantize_output,
                })
            }
            ForgeryKind::CopyRescaleMove => {
                let (dh, dw) = region_dims(area, wide, width);
                let sh = ((dh as f64 * 100.0 / f64::from(factor)).round() as usize).max(2);
                let sw = ((dw as f64 * 100.0 / f64::from(factor)).round() as usize).max(2);
                let dest = (scaled_dim(sh, factor), scaled_dim(sw, factor));
                place(rng, &[(sh, sw), dest], height, width).map(|r| ForgerySpec {
                    kind: cfg.kind,
                    source_rect: r[0],
                    dest_origin: r[1].origin(),
                    scale_factor: Some(factor),
                    offset: None,
                    clone_list: Vec::new(),
                    quantize_output: cfg.quantize_output,
                })
            }
            ForgeryKind::MultiClone => {
                let n = cfg.clones.max(1);
                let dims = region_dims(area / n as f64, wide, width);
                place(rng, &vec![dims; n + 1], height, width).map(|r| {
                    let clone_list = r[1..]
                        .iter()
                        .map(|d| CloneSpec {
                            dest: d.origin(),
                            offset: rng.gen_range(0..=cfg.max_offset.max(0)),
                        })
                        .collect();
                    ForgerySpec {
                        kind: cfg.kind,
                        source_rect: r[0],
                        dest_origin: r[1].origin(),
                        scale_factor: None,
                        offset: None,
                        clone_list,
                        quantize_output: cfg.quantize_output,
                    }
                })
            }
        };
        if let Some(spec) = spec {
            return Ok(spec);
        }
    }
    Err(Error::precondition(format!(
        "cannot place a {size_pct}% {:?} forgery in a {width}x{height} image",
        cfg.kind
    )))
}

/// Forged image `index` of the corpus and its ground truth.
pub fn corpus_item(cfg: &CorpusConfig, index: usize) -> Result<(GrayImage, GroundTruth)> {
    if cfg.sizes.is_empty() {
        return Err(Error::precondition("size sweep is empty"));
    }
    if cfg.kind == ForgeryKind::CopyRescaleMove && cfg.factors.is_empty() {
        return Err(Error::precondition("factor list is empty"));
    }
    let mut rng = image_rng(cfg.seed, index as u64);
    let base = match cfg.kind {
        ForgeryKind::CopyRescaleMove => real_base(&mut rng, cfg.width, cfg.height)?,
        _ => integer_base(&mut rng, cfg.width, cfg.height)?,
    };
    let size = cfg.sizes[index % cfg.sizes.len()];
    let factor = if cfg.factors.is_empty() {
        100
    } else {
        cfg.factors[(index / cfg.sizes.len()) % cfg.factors.len()]
    };
    let spec = random_spec(&mut rng, cfg, size, factor)?;
    synthesize(&base, &spec)
}

pub const MANIFEST: &str = "manifest.json";

/// Writes `img_<k>`, `mask_<k>.png` and `manifest.json` into `dir`.
pub fn generate_corpus(cfg: &CorpusConfig, dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries: Vec<ManifestEntry> = (0..cfg.count)
        .into_par_iter()
        .map(|k| -> Result<ManifestEntry> {
            let (img, truth) = corpus_item(cfg, k)?;
            let id = format!("img_{k}");
            let image = format!("{id}.{}", natural_extension(img.depth()));
            let mask = format!("mask_{k}.png");
            save_image(&img, dir.join(&image))?;
            save_mask(&truth.mask, dir.join(&mask))?;
            let dest_area: usize = truth.spec.dest_rects()?.iter().map(Rect::area).sum();
            let size_pct = 100.0 * dest_area as f64 / (img.width() * img.height()) as f64;
            Ok(ManifestEntry {
                id,
                image,
                mask,
                spec: truth.spec,
                size_pct,
                size_bucket_pct: size_bucket(size_pct),
                clamped: truth.clamped,
            })
        })
        .collect::<Result<_>>()?;
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&entries).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path: PathBuf = dir.as_ref().join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
