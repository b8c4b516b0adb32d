//! Raw, central and normalized image moments and the first four Hu invariants.
//!
//! `x` is the column index and `y` the row index, both zero-based. Sums run in
//! row-major order so results are bit-reproducible.

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Raw moment `Σ x^p y^q f(x, y)` for `p, q ∈ {0, 1, 2, 3}`.
pub fn raw_moment(img: &GrayImage, p: u32, q: u32) -> f64 {
    assert!(p <= 3 && q <= 3, "moment order out of range");
    let mut sum = 0.0;
    for y in 0..img.height() {
        let yq = (y as f64).powi(q as i32);
        for x in 0..img.width() {
            sum += (x as f64).powi(p as i32) * yq * img.get(y, x);
        }
    }
    sum
}

/// Central moments `μ_pq` for `p + q ≤ 3`, indexed `[p][q]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CentralMoments {
    mu: [[f64; 4]; 4],
    pub centroid_x: f64,
    pub centroid_y: f64,
}

impl CentralMoments {
    pub fn get(&self, p: usize, q: usize) -> f64 {
        assert!(p + q <= 3, "only orders up to 3 are tabulated");
        self.mu[p][q]
    }
}

pub fn central_moments(img: &GrayImage) -> Result<CentralMoments> {
    let m00 = raw_moment(img, 0, 0);
    if m00 <= 0.0 {
        return Err(Error::DegenerateImage);
    }
    let cx = raw_moment(img, 1, 0) / m00;
    let cy = raw_moment(img, 0, 1) / m00;
    let mut mu = [[0.0; 4]; 4];
    for y in 0..img.height() {
        let dy = y as f64 - cy;
        let dys = [1.0, dy, dy * dy, dy * dy * dy];
        for x in 0..img.width() {
            let f = img.get(y, x);
            if f == 0.0 {
                continue;
            }
            let dx = x as f64 - cx;
            let dxs = [1.0, dx, dx * dx, dx * dx * dx];
            for p in 0..4 {
                for q in 0..4 - p {
                    mu[p][q] += dxs[p] * dys[q] * f;
                }
            }
        }
    }
    // by definition, and exact rather than rounded
    mu[0][0] = m00;
    Ok(CentralMoments {
        mu,
        centroid_x: cx,
        centroid_y: cy,
    })
}

/// Scale-normalized moments `η_pq = μ_pq / μ00^γ`, `γ = (p + q + 2) / 2`,
/// for `2 ≤ p + q ≤ 3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedMoments {
    pub eta20: f64,
    pub eta11: f64,
    pub eta02: f64,
    pub eta30: f64,
    pub eta21: f64,
    pub eta12: f64,
    pub eta03: f64,
}

pub fn normalized_moments(mu: &CentralMoments) -> Result<NormalizedMoments> {
    let m00 = mu.get(0, 0);
    if m00 <= 0.0 {
        return Err(Error::DegenerateImage);
    }
    let second = m00 * m00;
    let third = m00.powf(2.5);
    Ok(NormalizedMoments {
        eta20: mu.get(2, 0) / second,
        eta11: mu.get(1, 1) / second,
        eta02: mu.get(0, 2) / second,
        eta30: mu.get(3, 0) / third,
        eta21: mu.get(2, 1) / third,
        eta12: mu.get(1, 2) / third,
        eta03: mu.get(0, 3) / third,
    })
}

/// The four Hu invariants `φ1..φ4` and their absolute log10 magnitudes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HuFeature {
    pub phi: [f64; 4],
    /// `|log10 |φ_i||`; infinite where `φ_i = 0`.
    pub log_abs: [f64; 4],
    /// `φ_i = 0`.
    pub degenerate: [bool; 4],
}

impl HuFeature {
    pub fn from_phi(phi: [f64; 4]) -> Self {
        let degenerate = phi.map(|p| p == 0.0);
        let log_abs = phi.map(|p| p.abs().log10().abs());
        HuFeature {
            phi,
            log_abs,
            degenerate,
        }
    }
}

pub fn hu_from_normalized(n: &NormalizedMoments) -> HuFeature {
    let phi1 = n.eta20 + n.eta02;
    let d = n.eta20 - n.eta02;
    let phi2 = d * d + 4.0 * n.eta11 * n.eta11;
    let a = n.eta30 - 3.0 * n.eta12;
    let b = 3.0 * n.eta21 - n.eta03;
    let phi3 = a * a + b * b;
    let c = n.eta30 + n.eta12;
    let e = n.eta21 + n.eta03;
    let phi4 = c * c + e * e;
    HuFeature::from_phi([phi1, phi2, phi3, phi4])
}

pub fn hu_features(img: &GrayImage) -> Result<HuFeature> {
    let mu = central_moments(img)?;
    Ok(hu_from_normalized(&normalized_moments(&mu)?))
}

/// Default tolerance on `|ΔL_i|` for [`hu_match`].
pub const DEFAULT_HU_TOLERANCE: f64 = 0.1;

/// Two features match when their degenerate flags agree and every defined
/// log magnitude differs by at most `tol`.
pub fn hu_match(a: &HuFeature, b: &HuFeature, tol: f64) -> bool {
    if a.degenerate != b.degenerate {
        return false;
    }
    (0..4)
        .filter(|&i| !a.degenerate[i])
        .all(|i| (a.log_abs[i] - b.log_abs[i]).abs() <= tol)
}

/// Largest `|ΔL_i|` over components defined in both features.
pub fn hu_distance(a: &HuFeature, b: &HuFeature) -> f64 {
    (0..4)
        .filter(|&i| !a.degenerate[i] && !b.degenerate[i])
        .map(|i| (a.log_abs[i] - b.log_abs[i]).abs())
        .fold(0.0, f64::max)
}
