//! Detection reports shared by the three detectors.

use serde::{Deserialize, Serialize};

use crate::dct_detector::DctConfig;
use crate::eval::Score;
use crate::exact::ExactConfig;
use crate::image::{BinaryMask, Rect};
use crate::rescale::RescaleParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rescale,
    Exact,
    Dct,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rescale => "rescale",
            Method::Exact => "exact",
            Method::Dct => "dct",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    /// Two equal-size blocks.
    Block,
    /// A source region and a (possibly rescaled) destination region.
    Region,
}

/// One asserted duplication.
///
/// `score` depends on the method: block distance for `dct`, intensity offset
/// for `exact`, scale factor in percent for `rescale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub source: Rect,
    pub dest: Rect,
    pub score: f64,
    pub kind: MatchKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ForgeryDetected,
    NotDetected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Params {
    Rescale(RescaleParams),
    Exact(ExactConfig),
    Dct(DctConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub method: Method,
    pub params: Params,
    pub matches: Vec<MatchPair>,
    pub verdict: Verdict,
    pub message: String,
    pub mask_path: Option<String>,
    pub elapsed_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<Score>,
    #[serde(skip)]
    pub mask: BinaryMask,
}

impl DetectionReport {
    pub(crate) fn new(
        method: Method,
        params: Params,
        matches: Vec<MatchPair>,
        mask: BinaryMask,
        negative_message: &str,
    ) -> Self {
        let (verdict, message) = if matches.is_empty() {
            (Verdict::NotDetected, negative_message.to_string())
        } else {
            (
                Verdict::ForgeryDetected,
                format!("{} duplicated pair(s) found", matches.len()),
            )
        };
        DetectionReport {
            method,
            params,
            matches,
            verdict,
            message,
            mask_path: None,
            elapsed_ms: 0,
            score: None,
            mask,
        }
    }
}

/// Union of both rectangles of every match.
pub fn mask_from_matches(width: usize, height: usize, matches: &[MatchPair]) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    for m in matches {
        mask.fill_rect(m.source);
        mask.fill_rect(m.dest);
    }
    mask
}

impl Default for BinaryMask {
    fn default() -> Self {
        BinaryMask::new(0, 0)
    }
}
