//! Bussgang linearization of the quantized observation.
//!
//! For a Gaussian input `y ~ N(0, sigma^2)`, the quantizer output decomposes
//! as `Q(y) = k*y + n_q` with `k = E[Q(y) y] / sigma^2` and `n_q` uncorrelated
//! with `y`. Applied per component this turns `r = Q(Phi x + v)` into the
//! effective linear-Gaussian model `r = A x + z`, `A = diag(k) Phi`,
//! `cov(z) = (sigma_v^2/2) diag(k)^2 + diag(r_nq)`.

use ndarray::Array1;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::Omega2Mode;
use crate::linops::{GramMode, MeasurementOp, Omega2};
use crate::quantizer::Quantizer;
use crate::{Error, Result};

/// Effective linear-Gaussian model after Bussgang linearization.
#[derive(Debug, Clone)]
pub struct EffectiveLinearModel {
    pub phi: MeasurementOp,
    /// Per-component Bussgang gains (diagonal of K), length 2MT.
    pub k_diag: Array1<f64>,
    /// Diagonal of the effective noise covariance Sigma.
    pub sigma_diag: Array1<f64>,
    /// Diagonal of the residual-distortion covariance R_nq.
    pub rnq_diag: Array1<f64>,
    /// Per-component std of the unquantized output y.
    pub sigma_y: Array1<f64>,
}

/// Precomputed solver coefficients: `Omega_2 = A^T Sigma^-1 A`, the linear
/// term `f = A^T Sigma^-1 r`, and the spectral bound `J >= lambda_max(Omega_2)`.
#[derive(Debug, Clone)]
pub struct SolverCoefficients {
    pub omega2: Omega2,
    pub f: Array1<f64>,
    pub j: f64,
}

fn phi_pdf(x: f64) -> f64 {
    if x.is_finite() {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    } else {
        0.0
    }
}

/// Per-component output std: `sigma_y_i^2 = pv * sum_k Phi_ik^2 + sigma_v^2/2`.
pub fn output_std(phi: &MeasurementOp, prior_component_variance: f64, sigma_v2: f64) -> Array1<f64> {
    let rows = phi.row_sq_norms();
    rows.mapv(|r2| (prior_component_variance * r2 + sigma_v2 / 2.0).sqrt())
}

/// Bussgang gain `k = E[Q(y) y] / sigma^2` for `y ~ N(0, sigma^2)`, closed form.
pub fn bussgang_gain(q: &Quantizer, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "bussgang_gain: sigma must be positive");
    match q {
        Quantizer::Identity => 1.0,
        Quantizer::Finite(sq) => {
            let n = sq.levels.len();
            let mut acc = 0.0;
            for l in 0..n {
                let lo = if l == 0 {
                    f64::NEG_INFINITY
                } else {
                    sq.thresholds[l - 1] / sigma
                };
                let hi = if l == n - 1 {
                    f64::INFINITY
                } else {
                    sq.thresholds[l] / sigma
                };
                acc += sq.levels[l] * (phi_pdf(lo) - phi_pdf(hi));
            }
            acc / sigma
        }
    }
}

/// Residual distortion variance `r_nq = E[Q(y)^2] - k^2 sigma^2`.
pub fn residual_variance(q: &Quantizer, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "residual_variance: sigma must be positive");
    match q {
        Quantizer::Identity => 0.0,
        Quantizer::Finite(sq) => {
            let std_normal = Normal::new(0.0, 1.0).unwrap();
            let n = sq.levels.len();
            let mut second_moment = 0.0;
            for l in 0..n {
                let lo = if l == 0 {
                    f64::NEG_INFINITY
                } else {
                    sq.thresholds[l - 1] / sigma
                };
                let hi = if l == n - 1 {
                    f64::INFINITY
                } else {
                    sq.thresholds[l] / sigma
                };
                let mass = std_normal.cdf(hi) - std_normal.cdf(lo);
                second_moment += sq.levels[l] * sq.levels[l] * mass;
            }
            let k = bussgang_gain(q, sigma);
            (second_moment - k * k * sigma * sigma).max(0.0)
        }
    }
}

/// Build the effective model from the measurement operator, quantizer, noise
/// variance, and the prior per-component signal variance used to calibrate
/// `sigma_y`.
pub fn build_effective_model(
    phi: MeasurementOp,
    q: &Quantizer,
    sigma_v2: f64,
    prior_component_variance: f64,
) -> Result<EffectiveLinearModel> {
    let sigma_y = output_std(&phi, prior_component_variance, sigma_v2);
    let mut k_diag = Array1::zeros(sigma_y.len());
    let mut rnq_diag = Array1::zeros(sigma_y.len());
    for (i, &sy) in sigma_y.iter().enumerate() {
        if !(sy > 0.0) {
            return Err(Error::InvalidConfig(
                "build_effective_model: zero output std; need sigma_v2 > 0 or nonzero prior variance".into(),
            ));
        }
        k_diag[i] = bussgang_gain(q, sy);
        rnq_diag[i] = residual_variance(q, sy);
    }
    let sigma_diag =
        k_diag.mapv(|k| k * k * sigma_v2 / 2.0) + &rnq_diag;
    Ok(EffectiveLinearModel {
        phi,
        k_diag,
        sigma_diag,
        rnq_diag,
        sigma_y,
    })
}

impl EffectiveLinearModel {
    /// Construct directly from parts; used by tests and the unquantized path.
    pub fn from_parts(
        phi: MeasurementOp,
        k_diag: Array1<f64>,
        sigma_diag: Array1<f64>,
    ) -> Self {
        let rnq_diag = &sigma_diag - &k_diag.mapv(|k| k * k);
        let sigma_y = sigma_diag.mapv(f64::sqrt);
        EffectiveLinearModel {
            phi,
            k_diag,
            sigma_diag,
            rnq_diag,
            sigma_y,
        }
    }

    /// `A x = diag(k) Phi x`.
    pub fn apply_a(&self, x: &Array1<f64>) -> Array1<f64> {
        self.phi.apply(x) * &self.k_diag
    }

    /// `A^T y = Phi^T diag(k) y`.
    pub fn apply_a_transpose(&self, y: &Array1<f64>) -> Array1<f64> {
        self.phi.apply_transpose(&(y * &self.k_diag))
    }

    /// Residual weighted by `Sigma^-1`: `(r - A x)^T Sigma^-1 (r - A x) / 2`.
    pub fn half_quadratic(&self, r_obs: &Array1<f64>, x: &Array1<f64>) -> f64 {
        let resid = r_obs - &self.apply_a(x);
        0.5 * resid
            .iter()
            .zip(self.sigma_diag.iter())
            .map(|(e, s)| e * e / s)
            .sum::<f64>()
    }
}

/// Precompute the solver coefficients from the effective model and the
/// quantized observation.
pub fn precompute(
    model: &EffectiveLinearModel,
    r_obs: &Array1<f64>,
    mode: Omega2Mode,
) -> Result<SolverCoefficients> {
    if model.sigma_diag.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidConfig(
            "precompute: Sigma must be positive elementwise".into(),
        ));
    }
    let gram_mode = match mode {
        Omega2Mode::Auto => GramMode::Auto,
        Omega2Mode::Dense => GramMode::Dense,
        Omega2Mode::Diagonal => GramMode::Diagonal,
    };
    // Omega_2 = Phi^T diag(k^2 / Sigma) Phi
    let w = &model.k_diag * &model.k_diag / &model.sigma_diag;
    let omega2 = model.phi.weighted_gram(&w, gram_mode);
    let f = model
        .phi
        .apply_transpose(&(r_obs * &model.k_diag / &model.sigma_diag));
    let j = omega2.spectral_bound();
    Ok(SolverCoefficients { omega2, f, j })
}
