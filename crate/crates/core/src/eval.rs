//! Pixel-level scoring of detection masks.
//!
//! `P = 100 · |pred ∧ truth| / |truth|`. Over-detection does not lower `P`;
//! false-positive pixels are counted separately so it stays visible.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::BinaryMask;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub correctly_detected: u64,
    pub actually_forged: u64,
    /// Percent in `[0, 100]`.
    pub p: f64,
    pub false_positive_pixels: u64,
}

fn pack(bits: &[bool]) -> Vec<u64> {
    bits.chunks(64)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u64, |w, (i, &b)| w | (u64::from(b) << i))
        })
        .collect()
}

pub fn score(pred: &BinaryMask, truth: &BinaryMask) -> Result<Score> {
    if (pred.width(), pred.height()) != (truth.width(), truth.height()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let (p, t) = (pack(pred.bits()), pack(truth.bits()));
    let (mut hit, mut forged, mut fp) = (0u64, 0u64, 0u64);
    for (a, b) in p.iter().zip(&t) {
        hit += u64::from((a & b).count_ones());
        forged += u64::from(b.count_ones());
        fp += u64::from((a & !b).count_ones());
    }
    if forged == 0 {
        return Err(Error::EmptyTruth);
    }
    Ok(Score {
        correctly_detected: hit,
        actually_forged: forged,
        p: 100.0 * hit as f64 / forged as f64,
        false_positive_pixels: fp,
    })
}

pub const BUCKETS: [u32; 4] = [10, 20, 30, 40];

/// Nearest bucket to a destination-area percentage; ties go to the smaller bucket.
pub fn size_bucket(area_pct: f64) -> u32 {
    let mut best = BUCKETS[0];
    for b in BUCKETS {
        if (area_pct - f64::from(b)).abs() < (area_pct - f64::from(best)).abs() {
            best = b;
        }
    }
    best
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub image_id: String,
    pub method: String,
    pub size_bucket_pct: u32,
    #[serde(rename = "P_pct")]
    pub p_pct: f64,
    pub fp_pixels: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketMean {
    pub size_bucket_pct: u32,
    pub images: usize,
    pub mean_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub buckets: Vec<BucketMean>,
    /// Mean of the non-empty bucket means.
    pub overall_mean: Option<f64>,
    /// Standard buckets without any score.
    pub empty_buckets: Vec<u32>,
}

pub fn aggregate(rows: &[ScoreRow]) -> Aggregate {
    let mut buckets = Vec::new();
    let mut empty_buckets = Vec::new();
    let mut keys: Vec<u32> = BUCKETS.to_vec();
    keys.extend(rows.iter().map(|r| r.size_bucket_pct));
    keys.sort_unstable();
    keys.dedup();
    for b in keys {
        let ps: Vec<f64> = rows
            .iter()
            .filter(|r| r.size_bucket_pct == b)
            .map(|r| r.p_pct)
            .collect();
        if ps.is_empty() {
            empty_buckets.push(b);
            continue;
        }
        buckets.push(BucketMean {
            size_bucket_pct: b,
            images: ps.len(),
            mean_p: ps.iter().sum::<f64>() / ps.len() as f64,
        });
    }
    let overall_mean = (!buckets.is_empty())
        .then(|| buckets.iter().map(|b| b.mean_p).sum::<f64>() / buckets.len() as f64);
    Aggregate {
        buckets,
        overall_mean,
        empty_buckets,
    }
}

pub fn write_csv(rows: &[ScoreRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Format(format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(e.to_string())))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub rows: Vec<ScoreRow>,
    pub aggregate: Aggregate,
}

pub fn write_json(summary: &EvalSummary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Rect;
    use proptest::prelude::*;

    fn naive(pred: &BinaryMask, truth: &BinaryMask) -> (u64, u64, u64) {
        let (mut hit, mut forged, mut fp) = (0, 0, 0);
        for r in 0..truth.height() {
            for c in 0..truth.width() {
                match (pred.get(r, c), truth.get(r, c)) {
                    (true, true) => {
                        hit += 1;
                        forged += 1
                    }
                    (false, true) => forged += 1,
                    (true, false) => fp += 1,
                    _ => {}
                }
            }
        }
        (hit, forged, fp)
    }

    #[test]
    fn basic_cases() {
        let mut truth = BinaryMask::new(20, 10);
        truth.fill_rect(Rect::new(2, 2, 4, 8));
        assert_eq!(score(&truth, &truth).unwrap().p, 100.0);
        let empty = BinaryMask::new(20, 10);
        let s = score(&empty, &truth).unwrap();
        assert_eq!((s.p, s.correctly_detected, s.actually_forged), (0.0, 0, 32));
        let mut half = BinaryMask::new(20, 10);
        half.fill_rect(Rect::new(2, 2, 2, 8));
        let s = score(&half, &truth).unwrap();
        assert_eq!((s.p, s.false_positive_pixels), (50.0, 0));
        let mut over = truth.clone();
        over.fill_rect(Rect::new(8, 0, 2, 20));
        let s = score(&over, &truth).unwrap();
        assert_eq!((s.p, s.false_positive_pixels), (100.0, 40));
    }

    #[test]
    fn errors() {
        let a = BinaryMask::new(4, 4);
        assert!(matches!(score(&a, &BinaryMask::new(4, 5)), Err(Error::DimensionMismatch(_))));
        assert!(matches!(score(&a, &a), Err(Error::EmptyTruth)));
    }

    #[test]
    fn buckets() {
        assert_eq!(size_bucket(10.01), 10);
        assert_eq!(size_bucket(5.0), 10);
        assert_eq!(size_bucket(24.9), 20);
        assert_eq!(size_bucket(25.0), 20);
        assert_eq!(size_bucket(33.0), 30);
        assert_eq!(size_bucket(70.0), 40);
    }

    fn row(bucket: u32, p: f64) -> ScoreRow {
        ScoreRow {
            image_id: format!("img_{bucket}"),
            method: "exact".into(),
            size_bucket_pct: bucket,
            p_pct: p,
            fp_pixels: 0,
        }
    }

    #[test]
    fn aggregates() {
        let rows: Vec<ScoreRow> = BUCKETS.iter().map(|&b| row(b, 100.0)).collect();
        let agg = aggregate(&rows);
        assert!(agg.buckets.iter().all(|b| b.mean_p == 100.0));
        assert_eq!(agg.overall_mean, Some(100.0));

        let rows: Vec<ScoreRow> = BUCKETS
            .iter()
            .zip([98.9, 98.7, 98.5, 97.9])
            .map(|(&b, p)| row(b, p))
            .collect();
        let agg = aggregate(&rows);
        assert!((agg.overall_mean.unwrap() - 98.5).abs() < 1e-9);
        for (b, p) in agg.buckets.iter().zip([98.9, 98.7, 98.5, 97.9]) {
            assert_eq!(b.mean_p, p);
        }

        let agg = aggregate(&[row(10, 40.0), row(10, 60.0)]);
        assert_eq!(agg.buckets.len(), 1);
        assert_eq!(agg.buckets[0].mean_p, 50.0);
        assert_eq!(agg.empty_buckets, vec![20, 30, 40]);
        assert_eq!(aggregate(&[]).overall_mean, None);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let rows = vec![row(10, 99.5), row(40, 0.0)];
        write_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("image_id,method,size_bucket_pct,P_pct,fp_pixels\n"));
        assert_eq!(read_csv(&path).unwrap(), rows);
    }

    fn mask_strategy() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1usize..40, 1usize..40).prop_flat_map(|(w, h)| {
            (
                prop::collection::vec(any::<bool>(), w * h),
                prop::collection::vec(any::<bool>(), w * h),
            )
                .prop_map(move |(a, b)| {
                    (
                        BinaryMask::from_bits(w, h, a).unwrap(),
                        BinaryMask::from_bits(w, h, b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn packed_matches_naive((pred, truth) in mask_strategy()) {
            let (hit, forged, fp) = naive(&pred, &truth);
            match score(&pred, &truth) {
                Ok(s) => {
                    prop_assert_eq!((s.correctly_detected, s.actually_forged, s.false_positive_pixels), (hit, forged, fp));
                    prop_assert_eq!(s.p, 100.0 * hit as f64 / forged as f64);
                    prop_assert!((0.0..=100.0).contains(&s.p));
                }
                Err(_) => prop_assert_eq!(forged, 0),
            }
        }

        #[test]
        fn adding_a_true_pixel_never_lowers_p((pred, truth) in mask_strategy(), pick in any::<prop::sample::Index>()) {
            prop_assume!(!truth.is_empty());
            let before = score(&pred, &truth).unwrap().p;
            let positions: Vec<usize> = (0..truth.bits().len()).filter(|&i| truth.bits()[i]).collect();
            let i = positions[pick.index(positions.len())];
            let mut grown = pred.clone();
            grown.set(i / truth.width(), i % truth.width(), true);
            prop_assert!(score(&grown, &truth).unwrap().p >= before);
        }

        #[test]
        fn permutation_invariant((pred, truth) in mask_strategy(), seed in any::<u64>()) {
            prop_assume!(!truth.is_empty());
            let n = truth.bits().len();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let shuffle = |m: &BinaryMask| {
                BinaryMask::from_bits(m.width(), m.height(), perm.iter().map(|&j| m.bits()[j]).collect()).unwrap()
            };
            prop_assert_eq!(score(&pred, &truth).unwrap(), score(&shuffle(&pred), &shuffle(&truth)).unwrap());
        }
    }
}
