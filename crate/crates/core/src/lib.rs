//! Copy-move forgery detection.
//!
//! Three detectors share one image model:
//!
//! * [`rescale`]: rescaled block corners matched at 15 decimals and verified
//!   with Hu moment invariants; finds regions pasted at a different size.
//! * [`exact`]: blocks equal up to a constant intensity offset, with repair
//!   for offsets that saturated at 255.
//! * [`dct_detector`]: blocks whose DCT coefficients agree apart from DC,
//!   found by sorting feature rows.
//!
//! [`lab`] synthesizes forgeries with known ground truth and [`eval`] scores
//! detection masks against it.

pub mod dct;
pub mod dct_detector;
pub mod error;
pub mod eval;
pub mod exact;
pub mod image;
pub mod io;
pub mod lab;
pub mod moments;
pub mod report;
pub mod rescale;

pub use dct_detector::{detect_intensity_dct, DctConfig};
pub use error::{Error, Result};
pub use eval::{score, Score};
pub use exact::{detect_intensity_exact, ExactConfig};
pub use image::{BinaryMask, Depth, GrayImage, Origin, Rect};
pub use io::{load_image, load_mask, save_image, save_mask};
pub use report::{DetectionReport, MatchKind, MatchPair, Method, Params, Verdict};
pub use rescale::{detect_rescale, RescaleConfig};
