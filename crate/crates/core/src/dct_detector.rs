//! Intensity-robust matching on DC-free block DCT features.
//!
//! Pipeline: per-block 2D DCT → 13-decimal quantization → row-major flatten
//! with the DC term dropped → lexicographic sort → runs of equal adjacent
//! rows → Euclidean distance filter on block origins.

use std::cmp::Ordering;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dct::{quantize_decimal, shared_dct_matrix, transform_with};
use crate::error::{Error, Result};
use crate::image::{block_origins, GrayImage, Origin, Rect};
use crate::report::{mask_from_matches, DetectionReport, MatchKind, MatchPair, Method, Params};

pub const FEATURE_PLACES: u32 = 13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DctConfig {
    pub block_size: usize,
    /// Pairs whose origins are at most this far apart (Euclidean, pixels) are dropped.
    pub threshold: f64,
    pub rounding_places: u32,
    /// Coefficient flattening order (informational).
    pub flattening: String,
    /// Runs of equal rows longer than this contribute one farthest partner
    /// per block instead of every pair. `None` disables the cap.
    pub run_cap: Option<usize>,
}

impl Default for DctConfig {
    fn default() -> Self {
        DctConfig {
            block_size: 8,
            threshold: 16.0,
            rounding_places: FEATURE_PLACES,
            flattening: "row-major".into(),
            run_cap: Some(64),
        }
    }
}

/// AC coefficients of one block plus its origin.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub coeffs: Vec<f64>,
    pub origin: Origin,
}

fn cmp_coeffs(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

impl FeatureRow {
    fn cmp_full(&self, other: &Self) -> Ordering {
        cmp_coeffs(&self.coeffs, &other.coeffs).then(self.origin.cmp(&other.origin))
    }
}

/// Feature rows in lexicographic order (origin as the final tie-break).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub block_size: usize,
    pub rows: Vec<FeatureRow>,
}

impl FeatureMatrix {
    pub fn is_sorted(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[0].cmp_full(&w[1]) != Ordering::Greater)
    }
}

/// Unsorted feature row of every overlapping block, row-major by origin.
pub fn feature_rows(img: &GrayImage, block_size: usize, places: u32) -> Result<Vec<FeatureRow>> {
    if block_size != 4 && block_size != 8 {
        return Err(Error::precondition(format!(
            "DCT block size must be 4 or 8, got {block_size}"
        )));
    }
    if !(1..=15).contains(&places) {
        return Err(Error::precondition(format!("decimal places {places} outside 1..=15")));
    }
    let d = shared_dct_matrix(block_size)?;
    let origins = block_origins(img, block_size)?;
    Ok(origins
        .par_iter()
        .map_init(
            || vec![0.0; block_size * block_size],
            |buf, &o| {
                for r in 0..block_size {
                    for c in 0..block_size {
                        buf[r * block_size + c] = img.get(o.row + r, o.col + c);
                    }
                }
                let coeffs = transform_with(&d, buf)
                    .coeffs
                    .into_iter()
                    .skip(1)
                    .map(|v| quantize_decimal(v, places))
                    .collect();
                FeatureRow { coeffs, origin: o }
            },
        )
        .collect())
}

pub fn build_feature_matrix(img: &GrayImage, block_size: usize) -> Result<FeatureMatrix> {
    build_feature_matrix_with(img, block_size, FEATURE_PLACES)
}

fn build_feature_matrix_with(img: &GrayImage, block_size: usize, places: u32) -> Result<FeatureMatrix> {
    let mut rows = feature_rows(img, block_size, places)?;
    rows.par_sort_by(FeatureRow::cmp_full);
    Ok(FeatureMatrix { block_size, rows })
}

/// Maximal runs (length ≥ 2) of rows with equal coefficients.
pub fn equal_runs(matrix: &FeatureMatrix) -> Vec<Range<usize>> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=matrix.rows.len() {
        let same = i < matrix.rows.len()
            && cmp_coeffs(&matrix.rows[i - 1].coeffs, &matrix.rows[i].coeffs) == Ordering::Equal;
        if !same {
            if i - start > 1 {
                runs.push(start..i);
            }
            start = i;
        }
    }
    runs
}

/// Every unordered origin pair inside each run of equal rows.
pub fn adjacent_matches(matrix: &FeatureMatrix) -> Vec<(Origin, Origin)> {
    let mut pairs = Vec::new();
    for run in equal_runs(matrix) {
        let rows = &matrix.rows[run];
        for (k, a) in rows.iter().enumerate() {
            for b in &rows[k + 1..] {
                pairs.push((a.origin, b.origin));
            }
        }
    }
    pairs
}

fn block_pair(a: Origin, b: Origin, block_size: usize) -> MatchPair {
    let (s, d) = if a <= b { (a, b) } else { (b, a) };
    MatchPair {
        source: Rect::square(s, block_size),
        dest: Rect::square(d, block_size),
        score: a.euclidean(b),
        kind: MatchKind::Block,
    }
}

/// Keeps pairs whose origins are strictly farther apart than `threshold`.
pub fn distance_filter(
    pairs: &[(Origin, Origin)],
    threshold: f64,
    block_size: usize,
) -> Result<Vec<MatchPair>> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::precondition("distance threshold must be non-negative"));
    }
    Ok(pairs
        .iter()
        .filter(|(a, b)| a.euclidean(*b) > threshold)
        .map(|&(a, b)| block_pair(a, b, block_size))
        .collect())
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull vertices (monotone chain).
fn hull(points: &[Origin]) -> Vec<Origin> {
    let mut pts: Vec<Origin> = points.to_vec();
    pts.sort();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let key = |o: &Origin| (o.row as i64, o.col as i64);
    let mut lower: Vec<Origin> = Vec::new();
    for p in &pts {
        while lower.len() >= 2
            && cross(key(&lower[lower.len() - 2]), key(&lower[lower.len() - 1]), key(p)) <= 0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Origin> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2
            && cross(key(&upper[upper.len() - 2]), key(&upper[upper.len() - 1]), key(p)) <= 0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn dist2(a: Origin, b: Origin) -> usize {
    let dr = a.row.abs_diff(b.row);
    let dc = a.col.abs_diff(b.col);
    dr * dr + dc * dc
}

/// For long runs: each member paired with its farthest run member, which is
/// always a hull vertex. Flags the same blocks as the full pair set would.
fn farthest_pairs(origins: &[Origin], threshold: f64, block_size: usize) -> Vec<MatchPair> {
    let vertices = hull(origins);
    origins
        .iter()
        .filter_map(|&o| {
            let far = vertices
                .iter()
                .copied()
                .max_by(|&a, &b| dist2(o, a).cmp(&dist2(o, b)).then(b.cmp(&a)))?;
            (o.euclidean(far) > threshold).then(|| block_pair(o, far, block_size))
        })
        .collect()
}

/// DCT-feature copy-move detection.
pub fn detect_intensity_dct(img: &GrayImage, cfg: &DctConfig) -> Result<DetectionReport> {
    if cfg.threshold.is_nan() || cfg.threshold < 0.0 {
        return Err(Error::precondition("distance threshold must be non-negative"));
    }
    let b = cfg.block_size;
    let matrix = build_feature_matrix_with(img, b, cfg.rounding_places)?;
    let runs = equal_runs(&matrix);
    let mut matches: Vec<MatchPair> = runs
        .par_iter()
        .flat_map_iter(|run| {
            let origins: Vec<Origin> = matrix.rows[run.clone()].iter().map(|r| r.origin).collect();
            match cfg.run_cap {
                Some(cap) if origins.len() > cap => farthest_pairs(&origins, cfg.threshold, b),
                _ => {
                    let mut pairs = Vec::new();
                    for (k, &x) in origins.iter().enumerate() {
                        for &y in &origins[k + 1..] {
                            if x.euclidean(y) > cfg.threshold {
                                pairs.push(block_pair(x, y, b));
                            }
                        }
                    }
                    pairs
                }
            }
        })
        .collect();
    matches.sort_by_key(|m| (m.source, m.dest));
    matches.dedup_by(|x, y| x.source == y.source && x.dest == y.dest);
    let mask = mask_from_matches(img.width(), img.height(), &matches);
    Ok(DetectionReport::new(
        Method::Dct,
        Params::Dct(cfg.clone()),
        matches,
        mask,
        "Forgery not found",
    ))
}
