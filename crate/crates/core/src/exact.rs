//! Exact intensity-invariant block matching.
//!
//! Two blocks match when their pixelwise difference is one positive constant,
//! optionally after repairing pixels clipped at 255 in the brighter block.
//! Instead of testing all block pairs, blocks are grouped by their
//! offset-free signature (samples minus the block minimum): a uniform
//! difference implies an identical signature, so only same-group pairs can
//! match. Clipped blocks are probed separately per saturation pattern.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{block_origins, Block, GrayImage, Origin, Rect};
use crate::report::{mask_from_matches, DetectionReport, MatchKind, MatchPair, Method, Params};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactConfig {
    pub block_size: usize,
    /// Minimum Chebyshev distance between matched block origins.
    pub min_offset: usize,
    /// Also report exact clones (difference 0).
    pub allow_zero_offset: bool,
    /// Signature groups larger than this contribute one farthest partner per
    /// block instead of every pair. `None` disables the cap.
    pub pair_cap: Option<usize>,
}

impl ExactConfig {
    pub fn with_block_size(block_size: usize) -> Self {
        ExactConfig {
            block_size,
            min_offset: 2 * block_size,
            allow_zero_offset: true,
            pair_cap: Some(64),
        }
    }
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig::with_block_size(4)
    }
}

/// Outcome of subtracting block `b` from block `a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiffResult {
    pub block_a_origin: Origin,
    pub block_b_origin: Origin,
    pub constant: i32,
    /// Positions of `a` at 255 that were repaired.
    pub saturated_count: usize,
}

fn integer_samples(block: &Block) -> Result<Vec<u8>> {
    block
        .samples
        .iter()
        .map(|&v| {
            if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
                Ok(v as u8)
            } else {
                Err(Error::precondition("exact matching needs integer8 samples"))
            }
        })
        .collect()
}

/// Tests whether `a − b` is a single positive constant, repairing positions
/// where `a` is clipped at 255.
///
/// Repair replaces the difference at every 255-position of `a` with the
/// maximum difference and re-tests uniformity. It is skipped when `b` also
/// contains 255 or when every sample of `a` is 255 (the offset would be
/// unidentifiable).
pub fn block_pair_difference(a: &Block, b: &Block) -> Result<Option<DiffResult>> {
    if a.size != b.size {
        return Err(Error::precondition(format!(
            "block sizes differ: {} vs {}",
            a.size, b.size
        )));
    }
    let (av, bv) = (integer_samples(a)?, integer_samples(b)?);
    Ok(pair_difference(&av, &bv).map(|(constant, saturated_count)| DiffResult {
        block_a_origin: a.origin,
        block_b_origin: b.origin,
        constant,
        saturated_count,
    }))
}

/// `(constant, repaired)` when `a − b` matches.
fn pair_difference(a: &[u8], b: &[u8]) -> Option<(i32, usize)> {
    let first = i32::from(a[0]) - i32::from(b[0]);
    if first > 0
        && a.iter()
            .zip(b)
            .all(|(&x, &y)| i32::from(x) - i32::from(y) == first)
    {
        return Some((first, 0));
    }
    let saturated = a.iter().filter(|&&x| x == 255).count();
    if saturated == 0 || saturated == a.len() || b.contains(&255) {
        return None;
    }
    let max = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| i32::from(x) - i32::from(y))
        .max()
        .expect("non-empty block");
    if max <= 0 {
        return None;
    }
    let uniform = a
        .iter()
        .zip(b)
        .all(|(&x, &y)| x == 255 || i32::from(x) - i32::from(y) == max);
    uniform.then_some((max, saturated))
}

/// One matched block pair: `dest − source` is `constant` (after repair).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactMatch {
    pub dest: Origin,
    pub source: Origin,
    pub constant: i32,
    pub saturated_count: usize,
}

struct BlockTable {
    size: usize,
    origins: Vec<Origin>,
    vals: Vec<u8>,
    mins: Vec<u8>,
}

impl BlockTable {
    fn new(img: &GrayImage, size: usize) -> Result<Self> {
        let pixels = integral_pixels(img)?;
        let origins = block_origins(img, size)?;
        let area = size * size;
        let width = img.width();
        let mut vals = vec![0u8; origins.len() * area];
        vals.par_chunks_mut(area)
            .zip(origins.par_iter())
            .for_each(|(dst, o)| {
                for r in 0..size {
                    let start = (o.row + r) * width + o.col;
                    dst[r * size..(r + 1) * size].copy_from_slice(&pixels[start..start + size]);
                }
            });
        let mins = vals
            .chunks(area)
            .map(|c| *c.iter().min().expect("non-empty"))
            .collect();
        Ok(BlockTable {
            size,
            origins,
            vals,
            mins,
        })
    }

    fn block(&self, i: usize) -> &[u8] {
        let area = self.size * self.size;
        &self.vals[i * area..(i + 1) * area]
    }

    fn signature(&self, i: usize) -> impl Iterator<Item = u8> + '_ {
        let m = self.mins[i];
        self.block(i).iter().map(move |&v| v - m)
    }
}

fn integral_pixels(img: &GrayImage) -> Result<Vec<u8>> {
    if let Some(px) = img.as_u8() {
        return Ok(px);
    }
    if img.samples().iter().all(|v| v.fract() == 0.0) {
        return Ok(img.to_u8());
    }
    Err(Error::precondition(
        "exact matching needs integer8 samples; the image has fractional values",
    ))
}

fn push_oriented(
    out: &mut Vec<ExactMatch>,
    table: &BlockTable,
    i: usize,
    j: usize,
    cfg: &ExactConfig,
) {
    let (oi, oj) = (table.origins[i], table.origins[j]);
    if oi.chebyshev(oj) < cfg.min_offset {
        return;
    }
    let c = i32::from(table.mins[j]) - i32::from(table.mins[i]);
    let (dest, source) = match c.cmp(&0) {
        std::cmp::Ordering::Greater => (oj, oi),
        std::cmp::Ordering::Less => (oi, oj),
        std::cmp::Ordering::Equal if cfg.allow_zero_offset => (oi.max(oj), oi.min(oj)),
        std::cmp::Ordering::Equal => return,
    };
    out.push(ExactMatch {
        dest,
        source,
        constant: c.abs(),
        saturated_count: 0,
    });
}

/// Farthest eligible partner of every member, via per-group bounding extremes.
fn capped_group_pairs(
    table: &BlockTable,
    members: &[usize],
    cfg: &ExactConfig,
    out: &mut Vec<ExactMatch>,
) {
    // extremes[k] = members achieving min row, max row, min col, max col
    let mut groups: BTreeMap<u8, [usize; 4]> = BTreeMap::new();
    for &m in members {
        let key = if cfg.allow_zero_offset { 0 } else { table.mins[m] };
        let o = table.origins[m];
        let e = groups.entry(key).or_insert([m; 4]);
        let better = [
            o.row < table.origins[e[0]].row,
            o.row > table.origins[e[1]].row,
            o.col < table.origins[e[2]].col,
            o.col > table.origins[e[3]].col,
        ];
        for (slot, b) in e.iter_mut().zip(better) {
            if b {
                *slot = m;
            }
        }
    }
    for &m in members {
        let own = if cfg.allow_zero_offset { None } else { Some(table.mins[m]) };
        let o = table.origins[m];
        let best = groups
            .iter()
            .filter(|(k, _)| Some(**k) != own)
            .flat_map(|(_, e)| e.iter().copied())
            .filter(|&p| p != m)
            .max_by(|&p, &q| {
                o.chebyshev(table.origins[p])
                    .cmp(&o.chebyshev(table.origins[q]))
                    .then(q.cmp(&p))
            });
        if let Some(p) = best {
            push_oriented(out, table, m.min(p), m.max(p), cfg);
        }
    }
}

/// Every matching block pair, deduplicated and sorted by `(dest, source)`.
pub fn exact_matches(img: &GrayImage, cfg: &ExactConfig) -> Result<Vec<ExactMatch>> {
    if cfg.block_size < 2 || cfg.block_size > 8 {
        return Err(Error::precondition(format!(
            "block size {} outside 2..=8",
            cfg.block_size
        )));
    }
    let table = BlockTable::new(img, cfg.block_size)?;
    let n = table.origins.len();

    // Group by offset-free signature.
    let mut order: Vec<usize> = (0..n).collect();
    order.par_sort_by(|&i, &j| table.signature(i).cmp(table.signature(j)).then(i.cmp(&j)));
    let runs: Vec<&[usize]> = order
        .chunk_by(|&i, &j| table.signature(i).eq(table.signature(j)))
        .filter(|run| run.len() > 1)
        .collect();
    let mut found: Vec<ExactMatch> = runs
        .par_iter()
        .flat_map_iter(|run| {
            let mut out = Vec::new();
            match cfg.pair_cap {
                Some(cap) if run.len() > cap => capped_group_pairs(&table, run, cfg, &mut out),
                _ => {
                    for (k, &i) in run.iter().enumerate() {
                        for &j in &run[k + 1..] {
                            push_oriented(&mut out, &table, i.min(j), i.max(j), cfg);
                        }
                    }
                }
            }
            out
        })
        .collect();

    found.extend(saturated_matches(&table, cfg));
    let unique: BTreeSet<ExactMatch> = found.into_iter().collect();
    Ok(unique.into_iter().collect())
}

/// Pairs that only match after 255-repair in the minuend block.
fn saturated_matches(table: &BlockTable, cfg: &ExactConfig) -> Vec<ExactMatch> {
    let area = table.size * table.size;
    let mut by_mask: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut unsaturated = Vec::new();
    for i in 0..table.origins.len() {
        let mask = table
            .block(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 255)
            .fold(0u64, |m, (k, _)| m | (1 << k));
        if mask == 0 {
            unsaturated.push(i);
        } else if mask.count_ones() as usize != area {
            by_mask.entry(mask).or_default().push(i);
        }
    }
    by_mask
        .par_iter()
        .flat_map_iter(|(&mask, minuends)| {
            let free = |i: usize| {
                let block = table.block(i);
                let kept: Vec<u8> = (0..area)
                    .filter(|k| mask & (1 << k) == 0)
                    .map(|k| block[k])
                    .collect();
                let m = *kept.iter().min().expect("mask leaves a free position");
                kept.into_iter().map(|v| v - m).collect::<Vec<u8>>()
            };
            let mut index: HashMap<Vec<u8>, Vec<usize>> = HashMap::new();
            for &b in &unsaturated {
                index.entry(free(b)).or_default().push(b);
            }
            let mut out = Vec::new();
            for &a in minuends {
                let Some(cands) = index.get(&free(a)) else {
                    continue;
                };
                for &b in cands {
                    let (oa, ob) = (table.origins[a], table.origins[b]);
                    if oa.chebyshev(ob) < cfg.min_offset {
                        continue;
                    }
                    if let Some((constant, saturated_count)) =
                        pair_difference(table.block(a), table.block(b))
                    {
                        out.push(ExactMatch {
                            dest: oa,
                            source: ob,
                            constant,
                            saturated_count,
                        });
                    }
                }
            }
            out
        })
        .collect()
}

pub const NOT_FOUND: &str = "Forgery not found";

/// Exact intensity-invariant copy-move detection over all overlapping blocks.
pub fn detect_intensity_exact(img: &GrayImage, cfg: &ExactConfig) -> Result<DetectionReport> {
    let b = cfg.block_size;
    if img.width() < 2 * b || img.height() < 2 * b {
        return Err(Error::precondition(format!(
            "image {}x{} smaller than twice the block size {b}",
            img.width(),
            img.height()
        )));
    }
    let matches: Vec<MatchPair> = exact_matches(img, cfg)?
        .into_iter()
        .map(|m| MatchPair {
            source: Rect::square(m.source, b),
            dest: Rect::square(m.dest, b),
            score: f64::from(m.constant),
            kind: MatchKind::Block,
        })
        .collect();
    let mask = mask_from_matches(img.width(), img.height(), &matches);
    Ok(DetectionReport::new(
        Method::Exact,
        Params::Exact(cfg.clone()),
        matches,
        mask,
        NOT_FOUND,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(vals: &[u8], size: usize, origin: Origin) -> Block {
        Block {
            origin,
            size,
            samples: vals.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    #[test]
    fn uniform_offset() {
        let b: Vec<u8> = (0..16).map(|i| i * 9).collect();
        let a: Vec<u8> = b.iter().map(|v| v + 20).collect();
        let r = block_pair_difference(
            &block(&a, 4, Origin::new(0, 9)),
            &block(&b, 4, Origin::new(0, 0)),
        )
        .unwrap()
        .unwrap();
        assert_eq!((r.constant, r.saturated_count), (20, 0));
        assert_eq!(r.block_a_origin, Origin::new(0, 9));
    }

    #[test]
    fn fully_saturated_uniform_source() {
        // b = 240 everywhere, a = clamp(b + 20) = 255: raw difference already uniform
        let r = block_pair_difference(
            &block(&[255; 16], 4, Origin::new(0, 0)),
            &block(&[240; 16], 4, Origin::new(5, 5)),
        )
        .unwrap()
        .unwrap();
        assert_eq!(r.constant, 15);
    }

    #[test]
    fn partially_saturated_is_repaired() {
        let b: Vec<u8> = (0..16).map(|i| 200 + i * 3).collect();
        let a: Vec<u8> = b.iter().map(|&v| (u16::from(v) + 20).min(255) as u8).collect();
        assert!(a.contains(&255));
        let r = block_pair_difference(&block(&a, 4, Origin::new(0, 0)), &block(&b, 4, Origin::new(8, 8)))
            .unwrap()
            .unwrap();
        assert_eq!(r.constant, 20);
        assert_eq!(r.saturated_count, a.iter().filter(|&&v| v == 255).count());
    }

    #[test]
    fn zero_and_negative_offsets_do_not_match() {
        let b: Vec<u8> = (0..16).map(|i| i * 9).collect();
        let same = block(&b, 4, Origin::new(0, 0));
        assert!(block_pair_difference(&same, &same).unwrap().is_none());
        let darker: Vec<u8> = b.iter().map(|v| v / 2).collect();
        assert!(block_pair_difference(&block(&darker, 4, Origin::new(0, 0)), &same)
            .unwrap()
            .is_none());
    }

    #[test]
    fn size_mismatch() {
        let a = block(&[1; 16], 4, Origin::new(0, 0));
        let b = block(&[1; 9], 3, Origin::new(0, 0));
        assert!(matches!(block_pair_difference(&a, &b), Err(Error::Precondition(_))));
    }

    #[test]
    fn saturation_never_repairs_without_255() {
        let b: Vec<u8> = (0..16).map(|i| i * 9).collect();
        let mut a: Vec<u8> = b.iter().map(|v| v + 20).collect();
        a[3] = 254;
        assert!(pair_difference(&a, &b).is_none());
    }

    fn noise_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut s = seed;
        let px: Vec<u8> = (0..w * h)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                40 + ((s >> 33) % 100) as u8
            })
            .collect();
        GrayImage::from_u8(w, h, &px).unwrap()
    }

    #[test]
    fn detects_offset_clone_exactly() {
        let mut img = noise_image(64, 64, 3);
        let src = img.crop(Rect::new(4, 4, 12, 12)).unwrap();
        let mut bright = src.clone();
        for r in 0..12 {
            for c in 0..12 {
                bright.set(r, c, src.get(r, c) + 30.0);
            }
        }
        img.paste(&bright, Origin::new(40, 30)).unwrap();
        let report = detect_intensity_exact(&img, &ExactConfig::default()).unwrap();
        let mut truth = crate::image::BinaryMask::new(64, 64);
        truth.fill_rect(Rect::new(4, 4, 12, 12));
        truth.fill_rect(Rect::new(40, 30, 12, 12));
        assert_eq!(report.mask, truth);
        assert!(report.matches.iter().all(|m| m.score == 30.0));
    }

    #[test]
    fn clean_image_reports_not_found() {
        let report = detect_intensity_exact(&noise_image(48, 48, 11), &ExactConfig::default()).unwrap();
        assert!(report.matches.is_empty());
        assert_eq!(report.message, NOT_FOUND);
    }

    #[test]
    fn strict_mode_skips_plain_clones() {
        let mut img = noise_image(48, 48, 5);
        let src = img.crop(Rect::new(2, 2, 8, 8)).unwrap();
        img.paste(&src, Origin::new(30, 30)).unwrap();
        let plain = detect_intensity_exact(&img, &ExactConfig::default()).unwrap();
        assert!(!plain.matches.is_empty());
        let strict = ExactConfig {
            allow_zero_offset: false,
            ..ExactConfig::default()
        };
        assert!(detect_intensity_exact(&img, &strict).unwrap().matches.is_empty());
    }

    #[test]
    fn flat_image_is_capped() {
        let img = GrayImage::filled(64, 64, 90);
        let m = exact_matches(&img, &ExactConfig::default()).unwrap();
        // at most one farthest partner per block
        assert!(m.len() <= 61 * 61);
        let report = detect_intensity_exact(&img, &ExactConfig::default()).unwrap();
        assert_eq!(report.mask.count(), 64 * 64);
    }

    #[test]
    fn rejects_real_valued_input() {
        let img = GrayImage::from_real(16, 16, vec![1.5; 256]).unwrap();
        assert!(matches!(
            detect_intensity_exact(&img, &ExactConfig::default()),
            Err(Error::Precondition(_))
        ));
    }
}
