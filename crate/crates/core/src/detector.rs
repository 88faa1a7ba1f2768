//! Activity detection from the recovered aggregate vector, channel
//! reconstruction, and performance metrics.
//!
//! Device `n` is declared active when the posterior odds of the active mixture
//! branch exceed one. The data-dependent part of the log-odds is thresholded
//! against a constant that absorbs the mixture weights and normalizers, so the
//! rule is `llr_n > threshold` with
//! `llr_n = sum_m t_nm / epsilon - (1 + a) sum_m ln(t_nm / b + 1)`.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::PriorHyper;
use crate::linops::pair_sq_magnitudes;

/// Detected support, per-device log-odds, and the decision threshold.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub active: Vec<u8>,
    pub log_odds: Array1<f64>,
    pub threshold: f64,
}

/// Per-trial performance metrics. `mse` is the unnormalized per-component
/// squared error; `nmse` normalizes by the truth energy. Rates are `None`
/// when undefined for the realized support (no active devices for TPR, no
/// inactive ones for FPR).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricsRecord {
    pub mse: f64,
    pub nmse: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

/// Constant decision threshold: the log-odds prior term plus the mixture
/// normalizer mismatch, `ln((1-q_s)/q_s) - M ln(a/(pi b)) - M ln(pi epsilon)`.
pub fn activity_threshold(m: usize, hyper: &PriorHyper) -> f64 {
    let pi = std::f64::consts::PI;
    let mf = m as f64;
    ((1.0 - hyper.q_s) / hyper.q_s).ln()
        - mf * (hyper.a / (pi * hyper.b)).ln()
        - mf * (pi * hyper.epsilon).ln()
}

/// Data-dependent part of the per-device log-odds.
pub fn activity_log_odds(x: &Array1<f64>, m: usize, hyper: &PriorHyper) -> Array1<f64> {
    let t = pair_sq_magnitudes(x);
    let n = t.len() / m;
    let mut llr = Array1::zeros(n);
    for dev in 0..n {
        let t_dev = &t.as_slice().unwrap()[dev * m..(dev + 1) * m];
        let energy: f64 = t_dev.iter().sum();
        let logs: f64 = t_dev.iter().map(|&t| (t / hyper.b + 1.0).ln()).sum();
        llr[dev] = energy / hyper.epsilon - (1.0 + hyper.a) * logs;
    }
    llr
}

/// Threshold the log-odds; degenerate mixture weights short-circuit to an
/// all-inactive (`q_s = 0`) or all-active (`q_s = 1`) decision.
pub fn detect(x: &Array1<f64>, m: usize, hyper: &PriorHyper) -> DetectionResult {
    let n = x.len() / (2 * m);
    if hyper.q_s <= 0.0 {
        return DetectionResult {
            active: vec![0; n],
            log_odds: Array1::from_elem(n, f64::NEG_INFINITY),
            threshold: f64::INFINITY,
        };
    }
    if hyper.q_s >= 1.0 {
        return DetectionResult {
            active: vec![1; n],
            log_odds: Array1::from_elem(n, f64::INFINITY),
            threshold: f64::NEG_INFINITY,
        };
    }
    let log_odds = activity_log_odds(x, m, hyper);
    let threshold = activity_threshold(m, hyper);
    let active = log_odds.iter().map(|&l| u8::from(l > threshold)).collect();
    DetectionResult {
        active,
        log_odds,
        threshold,
    }
}

/// Fold the real solution vector back into the complex M x N aggregate matrix
/// (device channels scaled by activity and large-scale gain).
pub fn reconstruct_channels(x: &Array1<f64>, m: usize) -> Array2<Complex64> {
    let mn = x.len() / 2;
    let n = mn / m;
    Array2::from_shape_fn((m, n), |(i, dev)| {
        let j = dev * m + i;
        Complex64::new(x[j], x[mn + j])
    })
}

/// Zero the columns of devices declared inactive.
pub fn apply_support(xmat: &Array2<Complex64>, active: &[u8]) -> Array2<Complex64> {
    let mut out = xmat.clone();
    for (dev, &a) in active.iter().enumerate() {
        if a == 0 {
            out.column_mut(dev).fill(Complex64::new(0.0, 0.0));
        }
    }
    out
}

/// Per-component estimation MSE `||est - truth||_F^2 / (2 M N)`, i.e. the
/// squared error averaged over the 2MN real components.
pub fn mse(est: &Array2<Complex64>, truth: &Array2<Complex64>) -> f64 {
    let err: f64 = est
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    err / (2.0 * truth.len() as f64)
}

/// Normalized MSE `||est - truth||_F^2 / ||truth||_F^2`; `None` when the truth
/// has zero energy.
pub fn nmse(est: &Array2<Complex64>, truth: &Array2<Complex64>) -> Option<f64> {
    let power: f64 = truth.iter().map(|z| z.norm_sqr()).sum();
    if power <= 0.0 {
        return None;
    }
    let err: f64 = est
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Some(err / power)
}

/// True- and false-positive rates of a detected support against the truth.
pub fn detection_rates(detected: &[u8], truth: &[u8]) -> (Option<f64>, Option<f64>) {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut pos = 0usize;
    let mut neg = 0usize;
    for (&d, &s) in detected.iter().zip(truth.iter()) {
        if s != 0 {
            pos += 1;
            if d != 0 {
                tp += 1;
            }
        } else {
            neg += 1;
            if d != 0 {
                fp += 1;
            }
        }
    }
    let tpr = (pos > 0).then(|| tp as f64 / pos as f64);
    let fpr = (neg > 0).then(|| fp as f64 / neg as f64);
    (tpr, fpr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse_prior::{log_p0, log_p1};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hyper() -> PriorHyper {
        PriorHyper {
            q_s: 0.1,
            a: 0.3,
            b: 0.05,
            epsilon: 0.01,
        }
    }

    /// Brute-force MAP rule: maximize `ln q_s + ln P1` vs `ln(1-q_s) + ln P0`
    /// directly from the mixture densities.
    fn oracle_decision(t_dev: &[f64], hyper: &PriorHyper) -> u8 {
        let active = hyper.q_s.ln() + log_p1(t_dev, hyper);
        let inactive = (1.0 - hyper.q_s).ln() + log_p0(t_dev, hyper);
        u8::from(active > inactive)
    }

    #[test]
    fn thresholded_llr_matches_posterior_odds_oracle() {
        let h = hyper();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for m in [1usize, 4, 32] {
            for _ in 0..2000 {
                let scale = 10f64.powf(rng.gen_range(-4.0..1.0));
                let x = Array1::from_shape_fn(2 * m, |_| scale * rng.gen_range(-1.0..1.0));
                let t = pair_sq_magnitudes(&x);
                let want = oracle_decision(t.as_slice().unwrap(), &h);
                let got = detect(&x, m, &h).active[0];
                assert_eq!(got, want, "m={m} scale={scale}");
            }
        }
    }

    #[test]
    fn degenerate_mixture_weights_short_circuit() {
        let m = 2;
        let x = array![10.0, 10.0, 10.0, 10.0];
        let mut h = hyper();
        h.q_s = 0.0;
        assert_eq!(detect(&x, m, &h).active, vec![0]);
        h.q_s = 1.0;
        let x0 = Array1::zeros(2 * m);
        assert_eq!(detect(&x0, m, &h).active, vec![1]);
    }

    #[test]
    fn strong_and_weak_devices_split_correctly() {
        let h = hyper();
        let m = 4;
        // Device 0 strong, device 1 essentially zero.
        let mut x = Array1::zeros(2 * m * 2);
        for i in 0..m {
            x[i] = 1.0;
            x[2 * m + i] = 1.0; // imaginary half of device 0
        }
        let r = detect(&x, m, &h);
        assert_eq!(r.active, vec![1, 0]);
        assert!(r.log_odds[0] > r.threshold);
        assert!(r.log_odds[1] < r.threshold);
    }

    #[test]
    fn reconstruction_round_trip() {
        let m = 3;
        let n = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xmat = Array2::from_shape_fn((m, n), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        // Real embedding: [Re vec(X); Im vec(X)], column-major vec.
        let mn = m * n;
        let mut x = Array1::zeros(2 * mn);
        for dev in 0..n {
            for i in 0..m {
                x[dev * m + i] = xmat[[i, dev]].re;
                x[mn + dev * m + i] = xmat[[i, dev]].im;
            }
        }
        let back = reconstruct_channels(&x, m);
        for (a, b) in back.iter().zip(xmat.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn apply_support_zeroes_inactive_columns() {
        let xmat = array![
            [Complex64::new(1.0, 2.0), Complex64::new(3.0, 4.0)],
            [Complex64::new(5.0, 6.0), Complex64::new(7.0, 8.0)]
        ];
        let out = apply_support(&xmat, &[0, 1]);
        assert_eq!(out.column(0).iter().map(|z| z.norm()).sum::<f64>(), 0.0);
        assert_eq!(out.column(1)[0], xmat.column(1)[0]);
    }

    #[test]
    fn nmse_reference_values() {
        let truth = array![[Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)]];
        assert_eq!(nmse(&truth, &truth), Some(0.0));
        let zero = Array2::zeros((1, 2));
        assert_eq!(nmse(&truth, &zero), None);
        // est = 0: error power equals truth power.
        assert!((nmse(&zero, &truth).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mse_reference_values() {
        let truth = array![[Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)]];
        assert_eq!(mse(&truth, &truth), 0.0);
        // Each of the 2MN real components off by exactly 1.
        let est = truth.mapv(|z| z + Complex64::new(1.0, 1.0));
        assert!((mse(&est, &truth) - 1.0).abs() < 1e-15);
        // Independent two-pass evaluation.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = Array2::from_shape_fn((3, 4), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let b = Array2::from_shape_fn((3, 4), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b.iter()) {
            acc += (x.re - y.re).powi(2);
            acc += (x.im - y.im).powi(2);
        }
        assert!((mse(&a, &b) - acc / 24.0).abs() < 1e-12);
    }

    #[test]
    fn rates_handle_undefined_cases() {
        assert_eq!(detection_rates(&[1, 0, 1], &[1, 0, 0]), (
            Some(1.0),
            Some(0.5)
        ));
        assert_eq!(detection_rates(&[0, 0], &[0, 0]).0, None);
        assert_eq!(detection_rates(&[1, 1], &[1, 1]).1, None);
        let (tpr, fpr) = detection_rates(&[0, 1, 1, 0], &[1, 1, 0, 0]);
        assert_eq!(tpr, Some(0.5));
        assert_eq!(fpr, Some(0.5));
    }
}
