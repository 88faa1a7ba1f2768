//! Scalar quantizers: minimum-MSE (Lloyd-Max) design for Gaussian inputs and
//! component-wise application to complex signals.

use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

const LLOYD_TOL: f64 = 1e-10;
// The fixed-point contraction slows down as the level count grows; designs
// with 8+ bits need well beyond 1e4 iterations to reach the tight tolerance.
const LLOYD_MAX_ITERS: usize = 100_000;

/// A B-bit scalar quantizer: sorted thresholds `alpha_1 < .. < alpha_{2^B-1}`
/// (with implicit +-infinity endpoints) and levels `beta_1 < .. < beta_{2^B}`.
/// Input in `(alpha_{l-1}, alpha_l]` maps to `beta_l`.
#[derive(Debug, Clone, Serialize)]
pub struct ScalarQuantizer {
    pub bits: u32,
    pub thresholds: Vec<f64>,
    pub levels: Vec<f64>,
}

/// A scalar quantizer or the identity bypass used for infinite-resolution
/// (unquantized) runs.
#[derive(Debug, Clone)]
pub enum Quantizer {
    Finite(ScalarQuantizer),
    Identity,
}

fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Minimum-MSE quantizer for N(0, input_std^2), by Lloyd fixed-point
/// iteration (alternating centroid and midpoint conditions).
pub fn lloyd_max_design(bits: u32, input_std: f64) -> Result<ScalarQuantizer> {
    if !(1..=12).contains(&bits) {
        return Err(Error::InvalidConfig(format!(
            "lloyd_max_design: bits must be in 1..=12, got {bits}"
        )));
    }
    if !(input_std > 0.0) {
        return Err(Error::InvalidConfig(
            "lloyd_max_design: input_std must be positive".into(),
        ));
    }
    let levels_n = 1usize << bits;
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    // Quantile initialization keeps the iteration symmetric about zero.
    let mut levels: Vec<f64> = (0..levels_n)
        .map(|l| input_std * std_normal.inverse_cdf((l as f64 + 0.5) / levels_n as f64))
        .collect();
    let mut thresholds = vec![0.0; levels_n - 1];

    let mut delta = f64::INFINITY;
    for _ in 0..LLOYD_MAX_ITERS {
        for l in 0..levels_n - 1 {
            thresholds[l] = 0.5 * (levels[l] + levels[l + 1]);
        }
        delta = 0.0;
        for l in 0..levels_n {
            let lo = if l == 0 {
                f64::NEG_INFINITY
            } else {
                thresholds[l - 1] / input_std
            };
            let hi = if l == levels_n - 1 {
                f64::INFINITY
            } else {
                thresholds[l] / input_std
            };
            let mass = std_normal.cdf(hi) - std_normal.cdf(lo);
            let pdf_lo = if lo.is_finite() { phi_pdf(lo) } else { 0.0 };
            let pdf_hi = if hi.is_finite() { phi_pdf(hi) } else { 0.0 };
            let centroid = input_std * (pdf_lo - pdf_hi) / mass;
            delta = delta.max((centroid - levels[l]).abs() / centroid.abs().max(1e-300));
            levels[l] = centroid;
        }
        if delta <= LLOYD_TOL {
            // Symmetrize exactly; the fixed point is symmetric and this
            // removes the last rounding drift.
            for l in 0..levels_n / 2 {
                let v = 0.5 * (levels[levels_n - 1 - l] - levels[l]);
                levels[l] = -v;
                levels[levels_n - 1 - l] = v;
            }
            for l in 0..levels_n - 1 {
                thresholds[l] = 0.5 * (levels[l] + levels[l + 1]);
            }
            return Ok(ScalarQuantizer {
                bits,
                thresholds,
                levels,
            });
        }
    }
    Err(Error::LloydMaxNonConvergence {
        iters: LLOYD_MAX_ITERS,
        delta,
    })
}

impl ScalarQuantizer {
    /// Map `v` to the level of its cell; a value exactly on a threshold
    /// belongs to the lower cell (half-open intervals `(alpha_{l-1}, alpha_l]`).
    pub fn quantize_scalar(&self, v: f64) -> f64 {
        let cell = self.thresholds.partition_point(|&a| a < v);
        self.levels[cell]
    }
}

impl Quantizer {
    pub fn from_bits(bits: crate::config::AdcBits, input_std: f64) -> Result<Self> {
        match bits {
            crate::config::AdcBits::Infinite => Ok(Quantizer::Identity),
            crate::config::AdcBits::Finite(b) => {
                Ok(Quantizer::Finite(lloyd_max_design(b, input_std)?))
            }
        }
    }

    pub fn quantize_scalar(&self, v: f64) -> f64 {
        match self {
            Quantizer::Identity => v,
            Quantizer::Finite(q) => q.quantize_scalar(v),
        }
    }

    /// Component-wise complex quantization: real and imaginary parts pass
    /// through the same scalar quantizer.
    pub fn quantize_complex(&self, y: &Array2<Complex64>) -> Array2<Complex64> {
        match self {
            Quantizer::Identity => y.clone(),
            Quantizer::Finite(q) => y.mapv(|z| {
                Complex64::new(q.quantize_scalar(z.re), q.quantize_scalar(z.im))
            }),
        }
    }
}
