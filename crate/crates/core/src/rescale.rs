//! Copy-rescale-move detection from rescaled block corners, verified with Hu
//! invariants.
//!
//! Every overlapping block is resized at each factor and its four corner
//! samples, quantized to 15 decimals, become a [`CornerFeature`]. Features
//! are matched against the image pixels, matched corner quadruples are
//! assembled into source/destination rectangles, and each pair of
//! rectangles is kept only if their Hu invariants agree.
//!
//! Two regimes exist. On real-depth images interpolated samples are
//! practically unique, so only values that occur at a few positions are
//! considered and a corner match anchors a region search: the source region
//! may be any size of at least one block and the destination is its
//! rescaled counterpart. On integer8 images equality degenerates to integer
//! equality; corner quadruples are then matched literally against
//! rectangles of the rescaled block size and Hu verification does the
//! pruning.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dct::quantize_decimal;
use crate::error::{Error, Result};
use crate::image::{
    block_origins, check_block_size, resized_corners, scaled_dim, Depth, GrayImage, Origin, Rect,
    INTERPOLATION_KERNEL,
};
use crate::moments::{hu_distance, hu_features, hu_match, DEFAULT_HU_TOLERANCE};
use crate::report::{mask_from_matches, DetectionReport, MatchKind, MatchPair, Method, Params};

pub const CORNER_PLACES: u32 = 15;

/// 10, 20, …, 500.
pub fn default_factors() -> Vec<u32> {
    (1..=50).map(|k| k * 10).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaleConfig {
    pub block_size: usize,
    /// Rescale factors in percent, each at least 10.
    pub factors: Vec<u32>,
    pub hu_tolerance: f64,
    pub rounding_places: u32,
    /// Upper bound on unverified candidates; the report records truncation.
    pub max_candidates: usize,
    /// Real-depth regime: values found at more positions than this are not
    /// distinctive and are ignored as anchors.
    pub max_value_multiplicity: usize,
}

impl Default for RescaleConfig {
    fn default() -> Self {
        RescaleConfig {
            block_size: 4,
            factors: default_factors(),
            hu_tolerance: DEFAULT_HU_TOLERANCE,
            rounding_places: CORNER_PLACES,
            max_candidates: 20_000,
            max_value_multiplicity: 16,
        }
    }
}

impl RescaleConfig {
    fn validate(&self) -> Result<()> {
        if self.block_size < 2 {
            return Err(Error::precondition("block size must be at least 2"));
        }
        check_factors(&self.factors)?;
        if self.hu_tolerance.is_nan() || self.hu_tolerance <= 0.0 {
            return Err(Error::precondition("Hu tolerance must be positive"));
        }
        if !(1..=15).contains(&self.rounding_places) {
            return Err(Error::precondition("rounding places outside 1..=15"));
        }
        Ok(())
    }
}

fn check_factors(factors: &[u32]) -> Result<()> {
    if factors.is_empty() {
        return Err(Error::precondition("factor list is empty"));
    }
    if let Some(f) = factors.iter().find(|&&f| f < 10) {
        return Err(Error::precondition(format!("rescale factor {f}% is below 10%")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Real-depth samples compared at 15 decimals; region assembly.
    RealDecimal,
    /// 8-bit samples compared as integers; block-size rectangles only.
    Integer,
}

/// Effective parameters recorded in a rescale report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaleParams {
    #[serde(flatten)]
    pub config: RescaleConfig,
    pub interpolation: String,
    pub regime: Regime,
    pub truncated: bool,
}

/// Corners (top-left, top-right, bottom-left, bottom-right) of one block
/// resized by `scale_factor` percent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CornerFeature {
    pub block_origin: Origin,
    pub scale_factor: u32,
    pub corners: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RescaleCandidate {
    pub source_rect: Rect,
    pub dest_rect: Rect,
    pub scale_factor: u32,
    pub hu_verified: bool,
    /// Largest log-magnitude gap between the two regions' Hu invariants.
    pub hu_distance: f64,
}

fn block_features(
    img: &GrayImage,
    origin: Origin,
    block_size: usize,
    factors: &[u32],
    places: u32,
) -> Result<Vec<CornerFeature>> {
    let block = img.crop(Rect::square(origin, block_size))?;
    let mut out = Vec::with_capacity(factors.len());
    for &f in factors {
        if scaled_dim(block_size, f) == 0 {
            continue;
        }
        let corners = resized_corners(&block, f)?.map(|v| quantize_decimal(v, places));
        out.push(CornerFeature {
            block_origin: origin,
            scale_factor: f,
            corners,
        });
    }
    Ok(out)
}

/// One feature per (block, factor), ordered by block origin then factor.
/// Factors that shrink a block to nothing are skipped.
pub fn build_corner_features(
    img: &GrayImage,
    block_size: usize,
    factors: &[u32],
) -> Result<Vec<CornerFeature>> {
    check_block_size(img, block_size)?;
    check_factors(factors)?;
    let per_block: Vec<Vec<CornerFeature>> = block_origins(img, block_size)?
        .par_iter()
        .map(|&o| block_features(img, o, block_size, factors, CORNER_PLACES))
        .collect::<Result<_>>()?;
    Ok(per_block.into_iter().flatten().collect())
}

/// Value lookups over the quantized image.
struct Matcher<'a> {
    img: &'a GrayImage,
    cfg: &'a RescaleConfig,
    regime: Regime,
    /// Bit patterns of the quantized samples.
    bits: Vec<u64>,
    /// Real regime: distinctive repeated values and their positions.
    repeats: HashMap<u64, Vec<Origin>>,
    found: Vec<RescaleCandidate>,
    truncated: bool,
}

impl<'a> Matcher<'a> {
    fn new(img: &'a GrayImage, cfg: &'a RescaleConfig) -> Self {
        let regime = match img.depth() {
            Depth::Integer8 => Regime::Integer,
            Depth::Real => Regime::RealDecimal,
        };
        let bits: Vec<u64> = img
            .samples()
            .iter()
            .map(|&v| quantize_decimal(v, cfg.rounding_places).to_bits())
            .collect();
        let mut repeats: HashMap<u64, Vec<Origin>> = HashMap::new();
        if regime == Regime::RealDecimal {
            for (i, &b) in bits.iter().enumerate() {
                repeats
                    .entry(b)
                    .or_default()
                    .push(Origin::new(i / img.width(), i % img.width()));
            }
            repeats.retain(|_, v| v.len() >= 2 && v.len() <= cfg.max_value_multiplicity);
        }
        Matcher {
            img,
            cfg,
            regime,
            bits,
            repeats,
            found: Vec::new(),
            truncated: false,
        }
    }

    #[inline]
    fn at(&self, row: usize, col: usize) -> u64 {
        self.bits[row * self.img.width() + col]
    }

    fn push(&mut self, c: RescaleCandidate) -> bool {
        if self.found.len() >= self.cfg.max_candidates {
            self.truncated = true;
            return false;
        }
        self.found.push(c);
        true
    }

    fn feed(&mut self, features: &[CornerFeature]) -> Result<()> {
        match self.regime {
            Regime::RealDecimal => {
                let mut by_origin: BTreeMap<Origin, Vec<&CornerFeature>> = BTreeMap::new();
                for f in features {
                    by_origin.entry(f.block_origin).or_default().push(f);
                }
                for (origin, mut feats) in by_origin {
                    feats.sort_by_key(|f| f.scale_factor);
                    self.match_anchor(origin, &feats);
                    if self.truncated {
                        break;
                    }
                }
            }
            Regime::Integer => {
                let mut by_factor: BTreeMap<u32, Vec<&CornerFeature>> = BTreeMap::new();
                for f in features {
                    by_factor.entry(f.scale_factor).or_default().push(f);
                }
                for (factor, mut feats) in by_factor {
                    feats.sort_by_key(|f| f.block_origin);
                    self.match_literal(factor, &feats);
                    if self.truncated {
                        break;
                    }
                }
            }
        }
        Ok(())
    }

    /// Real regime insertion: a pair contained in an existing pair, in either
    /// orientation, is dropped; pairs it contains are replaced.
    fn insert_maximal(&mut self, c: RescaleCandidate) -> bool {
        let key = (c.source_rect, c.dest_rect);
        if self
            .found
            .iter()
            .any(|f| contains_pair((f.source_rect, f.dest_rect), key))
        {
            return true;
        }
        self.found
            .retain(|f| !contains_pair(key, (f.source_rect, f.dest_rect)));
        self.push(c)
    }

    /// Real regime: the features of one block anchor region searches at every
    /// other position holding its top-left corner value.
    fn match_anchor(&mut self, p: Origin, feats: &[&CornerFeature]) {
        let Some(first) = feats.first() else {
            return;
        };
        let tl = first.corners[0].to_bits();
        let Some(partners) = self.repeats.get(&tl).cloned() else {
            return;
        };
        for q in partners {
            if q == p {
                continue;
            }
            let mut pairs: Vec<(Rect, Rect, u32)> = Vec::new();
            for f in feats {
                if f.corners[0].to_bits() != tl {
                    continue;
                }
                for (src, dst) in self.assemble(p, q, f.scale_factor) {
                    pairs.push((src, dst, f.scale_factor));
                }
            }
            for (src, dst, factor) in prune_dominated(pairs) {
                if !self.insert_maximal(RescaleCandidate {
                    source_rect: src,
                    dest_rect: dst,
                    scale_factor: factor,
                    hu_verified: false,
                    hu_distance: f64::NAN,
                }) {
                    return;
                }
            }
        }
    }

    /// Pareto-maximal rectangle pairs anchored at source `p` and destination
    /// `q` whose four corners carry equal values and whose sizes relate by
    /// `factor`.
    fn assemble(&self, p: Origin, q: Origin, factor: u32) -> Vec<(Rect, Rect)> {
        let (h_img, w_img) = (self.img.height(), self.img.width());
        let b = self.cfg.block_size;
        let mut widths = Vec::new();
        for w in b..=w_img - p.col {
            let w2 = scaled_dim(w, factor);
            if w2 < 2 {
                continue;
            }
            if q.col + w2 > w_img {
                break;
            }
            if self.at(p.row, p.col + w - 1) == self.at(q.row, q.col + w2 - 1) {
                widths.push((w, w2));
            }
        }
        if widths.is_empty() {
            return Vec::new();
        }
        let mut heights = Vec::new();
        for h in b..=h_img - p.row {
            let h2 = scaled_dim(h, factor);
            if h2 < 2 {
                continue;
            }
            if q.row + h2 > h_img {
                break;
            }
            if self.at(p.row + h - 1, p.col) == self.at(q.row + h2 - 1, q.col) {
                heights.push((h, h2));
            }
        }
        let mut out = Vec::new();
        let mut best_h = 0;
        for &(w, w2) in widths.iter().rev() {
            for &(h, h2) in heights.iter().rev() {
                if h <= best_h {
                    break;
                }
                if self.at(p.row + h - 1, p.col + w - 1) == self.at(q.row + h2 - 1, q.col + w2 - 1) {
                    let src = Rect::new(p.row, p.col, h, w);
                    let dst = Rect::new(q.row, q.col, h2, w2);
                    if !src.intersects(&dst) {
                        out.push((src, dst));
                    }
                    best_h = h;
                    break;
                }
            }
        }
        out
    }

    /// Integer regime: rectangles of exactly the rescaled block size.
    fn match_literal(&mut self, factor: u32, feats: &[&CornerFeature]) {
        let b = self.cfg.block_size;
        let side = scaled_dim(b, factor);
        let (h_img, w_img) = (self.img.height(), self.img.width());
        if side < 2 || side > h_img || side > w_img {
            return;
        }
        let corners_at = |m: &Self, o: Origin| {
            [
                m.at(o.row, o.col),
                m.at(o.row, o.col + side - 1),
                m.at(o.row + side - 1, o.col),
                m.at(o.row + side - 1, o.col + side - 1),
            ]
        };
        let mut index: HashMap<[u64; 4], Vec<Origin>> = HashMap::new();
        for r in 0..=h_img - side {
            for c in 0..=w_img - side {
                let o = Origin::new(r, c);
                index.entry(corners_at(self, o)).or_default().push(o);
            }
        }
        for f in feats {
            let key = f.corners.map(f64::to_bits);
            let Some(hits) = index.get(&key) else {
                continue;
            };
            let src = Rect::square(f.block_origin, b);
            for &q in hits {
                let dst = Rect::square(q, side);
                if dst.intersects(&src) {
                    continue;
                }
                if !self.push(RescaleCandidate {
                    source_rect: src,
                    dest_rect: dst,
                    scale_factor: factor,
                    hu_verified: false,
                    hu_distance: f64::NAN,
                }) {
                    return;
                }
            }
        }
    }

    fn finish(mut self) -> (Vec<RescaleCandidate>, Regime, bool) {
        sort_candidates(&mut self.found);
        (self.found, self.regime, self.truncated)
    }
}

/// `outer` contains `inner`, allowing the roles of source and destination to swap.
fn contains_pair(outer: (Rect, Rect), inner: (Rect, Rect)) -> bool {
    (outer.0.contains_rect(&inner.0) && outer.1.contains_rect(&inner.1))
        || (outer.0.contains_rect(&inner.1) && outer.1.contains_rect(&inner.0))
}

/// Drops rectangle pairs contained in another pair; among identical pairs
/// keeps the factor closest to the actual width ratio.
fn prune_dominated(mut pairs: Vec<(Rect, Rect, u32)>) -> Vec<(Rect, Rect, u32)> {
    let ratio_gap = |(s, d, f): &(Rect, Rect, u32)| {
        let actual = 100.0 * d.width as f64 / s.width as f64;
        ((actual - f64::from(*f)).abs() * 1e6) as u64
    };
    pairs.sort_by(|a, b| {
        (a.0, a.1)
            .cmp(&(b.0, b.1))
            .then(ratio_gap(a).cmp(&ratio_gap(b)))
            .then(a.2.cmp(&b.2))
    });
    pairs.dedup_by(|later, earlier| later.0 == earlier.0 && later.1 == earlier.1);
    let keep: Vec<bool> = pairs
        .iter()
        .map(|x| {
            !pairs.iter().any(|y| {
                (y.0, y.1) != (x.0, x.1) && y.0.contains_rect(&x.0) && y.1.contains_rect(&x.1)
            })
        })
        .collect();
    pairs
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

fn sort_candidates(c: &mut [RescaleCandidate]) {
    c.sort_by(|a, b| {
        (a.source_rect.origin(), a.scale_factor, a.dest_rect, a.source_rect).cmp(&(
            b.source_rect.origin(),
            b.scale_factor,
            b.dest_rect,
            b.source_rect,
        ))
    });
}

/// Matches corner features against the image; see the module docs for the
/// two regimes. Self-matches (destination overlapping the source) are dropped.
pub fn match_corners(
    img: &GrayImage,
    features: &[CornerFeature],
    block_size: usize,
) -> Result<Vec<RescaleCandidate>> {
    let cfg = RescaleConfig {
        block_size,
        ..RescaleConfig::default()
    };
    let mut m = Matcher::new(img, &cfg);
    m.feed(features)?;
    Ok(m.finish().0)
}

/// Sets `hu_verified` on every candidate and keeps only the verified ones.
/// Regions with a zero zeroth moment cannot be verified and are dropped.
pub fn verify_candidates(
    img: &GrayImage,
    candidates: &[RescaleCandidate],
    tolerance: f64,
) -> Result<Vec<RescaleCandidate>> {
    let checked: Vec<Option<RescaleCandidate>> = candidates
        .par_iter()
        .map(|c| -> Result<Option<RescaleCandidate>> {
            let src = hu_features(&img.crop(c.source_rect)?);
            let dst = hu_features(&img.crop(c.dest_rect)?);
            let (src, dst) = match (src, dst) {
                (Ok(s), Ok(d)) => (s, d),
                (Err(Error::DegenerateImage), _) | (_, Err(Error::DegenerateImage)) => {
                    return Ok(None)
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            let verified = hu_match(&src, &dst, tolerance);
            Ok(verified.then_some(RescaleCandidate {
                hu_verified: true,
                hu_distance: hu_distance(&src, &dst),
                ..*c
            }))
        })
        .collect::<Result<_>>()?;
    Ok(checked.into_iter().flatten().collect())
}

pub const NOT_FORGED: &str = "Image is not subjected to copy-rescale-move forgery";

/// Unverified candidates for the whole image, streaming features so the
/// full (block, factor) table is never materialized.
pub fn find_candidates(
    img: &GrayImage,
    cfg: &RescaleConfig,
) -> Result<(Vec<RescaleCandidate>, Regime, bool)> {
    cfg.validate()?;
    let b = cfg.block_size;
    check_block_size(img, b)?;
    let mut m = Matcher::new(img, cfg);
    let origins = block_origins(img, b)?;
    match m.regime {
        Regime::RealDecimal => {
            let cols = img.width() - b + 1;
            for row in origins.chunks(cols) {
                let feats: Vec<Vec<CornerFeature>> = row
                    .par_iter()
                    .map(|&o| block_features(img, o, b, &cfg.factors, cfg.rounding_places))
                    .collect::<Result<_>>()?;
                let feats: Vec<CornerFeature> = feats.into_iter().flatten().collect();
                m.feed(&feats)?;
                if m.truncated {
                    break;
                }
            }
        }
        Regime::Integer => {
            let mut factors = cfg.factors.clone();
            factors.sort_unstable();
            factors.dedup();
            for f in factors {
                let feats: Vec<Vec<CornerFeature>> = origins
                    .par_iter()
                    .map(|&o| block_features(img, o, b, &[f], cfg.rounding_places))
                    .collect::<Result<_>>()?;
                let feats: Vec<CornerFeature> = feats.into_iter().flatten().collect();
                m.feed(&feats)?;
                if m.truncated {
                    break;
                }
            }
        }
    }
    Ok(m.finish())
}

/// Full rescale pipeline: features, matching, Hu verification and mask.
pub fn detect_rescale(img: &GrayImage, cfg: &RescaleConfig) -> Result<DetectionReport> {
    cfg.validate()?;
    let b = cfg.block_size;
    if img.width() < 2 * b || img.height() < 2 * b {
        return Err(Error::precondition(format!(
            "image {}x{} smaller than twice the block size {b}",
            img.width(),
            img.height()
        )));
    }
    let (candidates, regime, truncated) = find_candidates(img, cfg)?;
    let verified = verify_candidates(img, &candidates, cfg.hu_tolerance)?;
    let matches: Vec<MatchPair> = verified
        .iter()
        .map(|c| MatchPair {
            source: c.source_rect,
            dest: c.dest_rect,
            score: f64::from(c.scale_factor),
            kind: MatchKind::Region,
        })
        .collect();
    let mask = mask_from_matches(img.width(), img.height(), &matches);
    let params = RescaleParams {
        config: cfg.clone(),
        interpolation: INTERPOLATION_KERNEL.into(),
        regime,
        truncated,
    };
    Ok(DetectionReport::new(
        Method::Rescale,
        Params::Rescale(params),
        matches,
        mask,
        NOT_FORGED,
    ))
}
