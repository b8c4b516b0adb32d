//! Orthonormal type-II block DCT and decimal quantization.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::image::Block;

/// Square row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DctMatrix {
    pub size: usize,
    pub entries: Vec<f64>,
}

impl DctMatrix {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.size + col]
    }
}

/// Row `u`, column `x`: `α(u) cos(π (2x + 1) u / 2B)` with `α(0) = √(1/B)`
/// and `α(u) = √(2/B)` otherwise.
pub fn dct_matrix(size: usize) -> Result<DctMatrix> {
    if size < 2 {
        return Err(Error::precondition("DCT size must be at least 2"));
    }
    let b = size as f64;
    let mut entries = Vec::with_capacity(size * size);
    for u in 0..size {
        let alpha = if u == 0 { (1.0 / b).sqrt() } else { (2.0 / b).sqrt() };
        for x in 0..size {
            let angle = std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2.0 * b);
            entries.push(if u == 0 { alpha } else { alpha * angle.cos() });
        }
    }
    Ok(DctMatrix { size, entries })
}

/// Shared, lazily built matrix per block size.
pub fn shared_dct_matrix(size: usize) -> Result<Arc<DctMatrix>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<DctMatrix>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(m) = cache.lock().unwrap().get(&size) {
        return Ok(Arc::clone(m));
    }
    let m = Arc::new(dct_matrix(size)?);
    cache.lock().unwrap().insert(size, Arc::clone(&m));
    Ok(m)
}

/// 2D DCT coefficients of one block; `coeffs[0]` is DC, layout row-major over `(u, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DctBlock {
    pub size: usize,
    pub coeffs: Vec<f64>,
}

impl DctBlock {
    pub fn dc(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.coeffs[u * self.size + v]
    }
}

/// `D · X · Dᵀ`.
///
/// The block is shifted by its minimum sample before the transform and the
/// shift is restored on DC only (`DC += B · min`). Adding an integer constant
/// to an integer block then leaves the transform input unchanged, so every
/// AC coefficient is bit-identical.
pub fn block_dct_2d(block: &Block) -> Result<DctBlock> {
    let d = shared_dct_matrix(block.size)?;
    Ok(transform_with(&d, &block.samples))
}

pub(crate) fn transform_with(d: &DctMatrix, samples: &[f64]) -> DctBlock {
    let n = d.size;
    debug_assert_eq!(samples.len(), n * n);
    let shift = samples.iter().copied().fold(f64::INFINITY, f64::min);
    // tmp = D · (X − shift)
    let mut tmp = vec![0.0; n * n];
    for u in 0..n {
        for x in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += d.get(u, k) * (samples[k * n + x] - shift);
            }
            tmp[u * n + x] = acc;
        }
    }
    // coeffs = tmp · Dᵀ
    let mut coeffs = vec![0.0; n * n];
    for u in 0..n {
        for v in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += tmp[u * n + k] * d.get(v, k);
            }
            coeffs[u * n + v] = acc;
        }
    }
    coeffs[0] += n as f64 * shift;
    DctBlock { size: n, coeffs }
}

/// `Dᵀ · C · D`.
pub fn inverse_dct_2d(block: &DctBlock) -> Result<Vec<f64>> {
    let d = shared_dct_matrix(block.size)?;
    let n = block.size;
    let mut tmp = vec![0.0; n * n];
    for x in 0..n {
        for v in 0..n {
            tmp[x * n + v] = (0..n).map(|u| d.get(u, x) * block.get(u, v)).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            out[x * n + y] = (0..n).map(|v| tmp[x * n + v] * d.get(v, y)).sum();
        }
    }
    Ok(out)
}

/// Rounds to `places` decimal digits, half away from zero, deciding on the
/// exact binary value rather than on the rounded product `value · 10^places`.
///
/// When the value already carries fewer than `places` fractional digits of
/// binary precision (`|v| · 10^places ≥ 2^52`) it is returned unchanged, which
/// keeps the operation idempotent. Negative zero becomes zero.
pub fn quantize_decimal(value: f64, places: u32) -> f64 {
    debug_assert!((1..=15).contains(&places));
    let scale = 10f64.powi(places as i32);
    let a = value.abs();
    let scaled = a * scale;
    if !scaled.is_finite() || scaled >= 4_503_599_627_370_496.0 {
        return value + 0.0;
    }
    // scaled + err is the exact product
    let err = a.mul_add(scale, -scaled);
    let floor = scaled.floor();
    let above_half = (scaled - floor - 0.5) + err;
    let n = if above_half >= 0.0 { floor + 1.0 } else { floor };
    (n / scale).copysign(value) + 0.0
}

pub fn quantize_decimals(values: &[f64], places: u32) -> Result<Vec<f64>> {
    if !(1..=15).contains(&places) {
        return Err(Error::precondition(format!(
            "decimal places {places} outside 1..=15"
        )));
    }
    Ok(values.iter().map(|&v| quantize_decimal(v, places)).collect())
}
