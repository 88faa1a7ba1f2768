//! Two-level hierarchical prior on the aggregate vector and the EM quantities
//! derived from it.
//!
//! Per device the prior is a two-component mixture: an inactive slab (narrow
//! Gaussian of variance `epsilon` per complex element) and an active
//! heavy-tailed component (Gaussian-Gamma marginal, a Student-t-like density).
//! All products over the M elements of a device are evaluated as sums of logs;
//! direct products underflow already at M = 128.

use ndarray::Array1;

use crate::config::PriorHyper;
use crate::linops::pair_sq_magnitudes;

/// Posterior mixture responsibilities per device: `lam0 + lam1 = 1`.
#[derive(Debug, Clone)]
pub struct Responsibilities {
    pub lam0: Array1<f64>,
    pub lam1: Array1<f64>,
}

/// Diagonal weights of the MM surrogate, each of length 2MN.
#[derive(Debug, Clone)]
pub struct SurrogateWeights {
    pub lam0_diag: Array1<f64>,
    pub lam1_diag: Array1<f64>,
    pub w_diag: Array1<f64>,
}

/// `log P0(x[n])`: inactive slab over the M complex elements of one device.
pub fn log_p0(t_dev: &[f64], hyper: &PriorHyper) -> f64 {
    let m = t_dev.len() as f64;
    let sum: f64 = t_dev.iter().sum();
    -m * (std::f64::consts::PI * hyper.epsilon).ln() - sum / hyper.epsilon
}

/// `log P1(x[n])`: active heavy-tailed component over one device.
pub fn log_p1(t_dev: &[f64], hyper: &PriorHyper) -> f64 {
    let m = t_dev.len() as f64;
    let sum_log: f64 = t_dev.iter().map(|&t| (t / hyper.b + 1.0).ln()).sum();
    m * (hyper.a / (std::f64::consts::PI * hyper.b)).ln() - (1.0 + hyper.a) * sum_log
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Log prior of the full real vector `x` (length 2MN, devices of M complex
/// elements each): sum over devices of the log mixture.
pub fn log_prior(x: &Array1<f64>, m: usize, hyper: &PriorHyper) -> f64 {
    let t = pair_sq_magnitudes(x);
    let n = t.len() / m;
    let mut acc = 0.0;
    for dev in 0..n {
        let t_dev = &t.as_slice().unwrap()[dev * m..(dev + 1) * m];
        let lp0 = log_p0(t_dev, hyper);
        let lp1 = log_p1(t_dev, hyper);
        acc += match hyper.q_s {
            q if q <= 0.0 => lp0,
            q if q >= 1.0 => lp1,
            q => log_sum_exp((1.0 - q).ln() + lp0, q.ln() + lp1),
        };
    }
    acc
}

/// Per-device posterior probabilities of the inactive/active branch at the
/// current iterate.
pub fn responsibilities(x: &Array1<f64>, m: usize, hyper: &PriorHyper) -> Responsibilities {
    let t = pair_sq_magnitudes(x);
    let n = t.len() / m;
    let mut lam0 = Array1::zeros(n);
    let mut lam1 = Array1::zeros(n);
    for dev in 0..n {
        let t_dev = &t.as_slice().unwrap()[dev * m..(dev + 1) * m];
        let l1 = match hyper.q_s {
            q if q <= 0.0 => 0.0,
            q if q >= 1.0 => 1.0,
            q => {
                let odds = q.ln() + log_p1(t_dev, hyper)
                    - (1.0 - q).ln()
                    - log_p0(t_dev, hyper);
                1.0 / (1.0 + (-odds).exp())
            }
        };
        lam1[dev] = l1;
        lam0[dev] = 1.0 - l1;
    }
    Responsibilities { lam0, lam1 }
}

/// Diagonal surrogate weights at the expansion point `x`:
/// `Lam0 = lam0/epsilon`, `Lam1 = (1+a) lam1 / b`, `W = 1/(t/b + 1)` with the
/// pair magnitude shared between the real and imaginary halves.
pub fn surrogate_weights(
    x: &Array1<f64>,
    m: usize,
    resp: &Responsibilities,
    hyper: &PriorHyper,
) -> SurrogateWeights {
    let t = pair_sq_magnitudes(x);
    let mn = t.len();
    let mut lam0_diag = Array1::zeros(2 * mn);
    let mut lam1_diag = Array1::zeros(2 * mn);
    let mut w_diag = Array1::zeros(2 * mn);
    for i in 0..mn {
        let dev = i / m;
        let l0 = resp.lam0[dev] / hyper.epsilon;
        let l1 = (1.0 + hyper.a) * resp.lam1[dev] / hyper.b;
        let w = 1.0 / (t[i] / hyper.b + 1.0);
        lam0_diag[i] = l0;
        lam0_diag[mn + i] = l0;
        lam1_diag[i] = l1;
        lam1_diag[mn + i] = l1;
        w_diag[i] = w;
        w_diag[mn + i] = w;
    }
    SurrogateWeights {
        lam0_diag,
        lam1_diag,
        w_diag,
    }
}

/// Quadratic form of the prior surrogate: `sum_i (Lam0 + Lam1 * W)_i x_i^2`.
pub fn prior_surrogate_quad(x: &Array1<f64>, weights: &SurrogateWeights) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, &v)| (weights.lam0_diag[i] + weights.lam1_diag[i] * weights.w_diag[i]) * v * v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hyper() -> PriorHyper {
        PriorHyper {
            q_s: 0.1,
            a: 1e-6,
            b: 1e-6,
            epsilon: 1e-8,
        }
    }

    #[test]
    fn log_prior_at_zero_single_element() {
        let h = PriorHyper {
            q_s: 0.3,
            a: 0.5,
            b: 0.25,
            epsilon: 0.01,
        };
        let x = array![0.0, 0.0]; // N = 1, M = 1
        let got = log_prior(&x, 1, &h);
        let pi = std::f64::consts::PI;
        let expect = ((1.0 - h.q_s) / (pi * h.epsilon) + h.q_s * h.a / (pi * h.b)).ln();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn log_prior_is_additive_over_devices() {
        let h = hyper();
        let m = 2;
        // N = 2 devices, M = 2: layout [re d0; re d1; im d0; im d1]
        let x = array![0.3, -0.4, 1.2, 0.0, 0.5, -0.2, 0.1, 0.9];
        let full = log_prior(&x, m, &h);
        let d0 = array![0.3, -0.4, 0.5, -0.2];
        let d1 = array![1.2, 0.0, 0.1, 0.9];
        let sum = log_prior(&d0, m, &h) + log_prior(&d1, m, &h);
        assert!((full - sum).abs() < 1e-10);
    }

    #[test]
    fn responsibilities_sum_to_one() {
        let h = hyper();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array1::from_shape_fn(2 * 4 * 3, |_| rng.gen_range(-2.0..2.0));
        let r = responsibilities(&x, 4, &h);
        for dev in 0..3 {
            assert!((r.lam0[dev] + r.lam1[dev] - 1.0).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&r.lam0[dev]));
        }
    }

    #[test]
    fn zero_iterate_is_confidently_inactive() {
        let h = hyper();
        for m in [1usize, 4, 32] {
            let x = Array1::zeros(2 * m);
            let r = responsibilities(&x, m, &h);
            assert!(r.lam0[0] > 1.0 - 1e-8, "m={m} lam0={}", r.lam0[0]);
        }
    }

    #[test]
    fn large_iterate_is_confidently_active() {
        let h = hyper();
        let m = 8;
        // ||x[n]||^2 = 100 * epsilon * M spread evenly over pairs.
        let amp = (100.0 * h.epsilon * m as f64 / (2.0 * m as f64)).sqrt();
        let x = Array1::from_elem(2 * m, amp);
        let r = responsibilities(&x, m, &h);
        assert!(r.lam1[0] >= 1.0 - 1e-10, "lam1={}", r.lam1[0]);
    }

    #[test]
    fn weights_at_zero() {
        let h = hyper();
        let m = 3;
        let x = Array1::zeros(2 * m);
        let r = responsibilities(&x, m, &h);
        let w = surrogate_weights(&x, m, &r, &h);
        for i in 0..2 * m {
            assert!((w.w_diag[i] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_pair_symmetry() {
        let h = hyper();
        let m = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array1::from_shape_fn(2 * m, |_| rng.gen_range(-1.0..1.0));
        let r = responsibilities(&x, m, &h);
        let w = surrogate_weights(&x, m, &r, &h);
        for i in 0..m {
            assert_eq!(w.w_diag[i], w.w_diag[m + i]);
            assert_eq!(w.lam0_diag[i], w.lam0_diag[m + i]);
        }
    }

    #[test]
    fn surrogate_slope_matches_log_student_derivative() {
        // For one device with M = 1, the coefficient Lam1*W equals the
        // derivative of -(lam1-weighted) log P1 with respect to t at the
        // expansion point, checked by finite differences.
        let h = PriorHyper {
            q_s: 0.5,
            a: 0.3,
            b: 0.7,
            epsilon: 0.05,
        };
        let x = array![0.6, -0.8];
        let t0 = x[0] * x[0] + x[1] * x[1];
        let r = responsibilities(&x, 1, &h);
        let w = surrogate_weights(&x, 1, &r, &h);
        let coeff = w.lam1_diag[0] * w.w_diag[0] / r.lam1[0];
        let dt = 1e-7;
        let f = |t: f64| (1.0 + h.a) * (t / h.b + 1.0).ln();
        let fd = (f(t0 + dt) - f(t0 - dt)) / (2.0 * dt);
        assert!((coeff - fd).abs() < 1e-6, "coeff={coeff} fd={fd}");
    }

    #[test]
    fn responsibilities_depend_only_on_pair_magnitudes() {
        let h = hyper();
        let m = 3;
        let x = array![0.5, -0.2, 0.9, 0.1, 0.7, -0.3];
        // Permute intra-device pairs (M = 3, N = 1).
        let xp = array![0.9, 0.5, -0.2, -0.3, 0.1, 0.7];
        let a = responsibilities(&x, m, &h);
        let b = responsibilities(&xp, m, &h);
        assert!((a.lam1[0] - b.lam1[0]).abs() < 1e-12);
        assert!((log_prior(&x, m, &h) - log_prior(&xp, m, &h)).abs() < 1e-10);
    }

    #[test]
    fn no_overflow_at_extreme_magnitudes() {
        let h = hyper();
        let m = 256;
        for amp in [0.0, 1.0, 1e6] {
            let x = Array1::from_elem(2 * m, amp);
            let lp = log_prior(&x, m, &h);
            assert!(lp.is_finite(), "amp={amp} lp={lp}");
            let r = responsibilities(&x, m, &h);
            assert!(r.lam1[0].is_finite());
        }
    }

    proptest! {
        #[test]
        fn surrogate_majorizes_exact_log_prior(
            seed in 0u64..200,
            m in 1usize..5,
            n in 1usize..4,
        ) {
            let h = PriorHyper { q_s: 0.2, a: 0.4, b: 0.3, epsilon: 0.02 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 2 * m * n;
            let xj = Array1::from_shape_fn(dim, |_| rng.gen_range(-2.0..2.0));
            let x = Array1::from_shape_fn(dim, |_| rng.gen_range(-2.0..2.0));
            let r = responsibilities(&xj, m, &h);
            let w = surrogate_weights(&xj, m, &r, &h);
            let lhs = prior_surrogate_quad(&x, &w) - prior_surrogate_quad(&xj, &w);
            let rhs = -log_prior(&x, m, &h) + log_prior(&xj, m, &h);
            prop_assert!(lhs >= rhs - 1e-9, "lhs={lhs} rhs={rhs}");
        }
    }
}
