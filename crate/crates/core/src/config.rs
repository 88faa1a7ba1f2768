//! Scenario configuration and hyperparameters.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// ADC resolution: a finite number of bits per real dimension, or an ideal
/// (unquantized) front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdcBits {
    Finite(u32),
    /// Infinite resolution: the quantizer is bypassed and the Bussgang model
    /// degenerates to gain 1 with zero residual distortion.
    #[serde(with = "infinite_serde")]
    Infinite,
}

mod infinite_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("inf")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "inf" || s == "infinite" {
            Ok(())
        } else {
            Err(de::Error::custom("expected \"inf\""))
        }
    }
}

impl std::fmt::Display for AdcBits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdcBits::Finite(b) => write!(f, "{b}"),
            AdcBits::Infinite => write!(f, "inf"),
        }
    }
}

/// Hyperparameters of the two-level hierarchical prior: active ratio `q_s`,
/// Gamma hyperparameters `a`, `b` of the channel-element precision, and the
/// inactive-slab variance `epsilon` replacing the Dirac at zero.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PriorHyper {
    pub q_s: f64,
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
}

impl PriorHyper {
    /// Default hyperparameters tied to the per-component prior signal scale
    /// `1/(2*m_tilde)` so that the log-odds stay well conditioned across
    /// antenna counts and SNRs.
    pub fn default_for(q_s: f64, m_tilde: usize) -> Self {
        let pair_scale = 1.0 / m_tilde as f64;
        PriorHyper {
            q_s,
            a: 1.0,
            b: 1e-2 * pair_scale,
            epsilon: 1e-2 * pair_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(
                "prior hyperparameters a, b, epsilon must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.q_s) {
            return Err(Error::InvalidConfig("q_s must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Storage/approximation mode for the quadratic coefficient matrix of the
/// solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Omega2Mode {
    /// Pick automatically: exact factored form when the calibration is
    /// uniform, dense up to 2MN = 4096, diagonal approximation beyond.
    Auto,
    /// Materialize the dense 2MN x 2MN matrix.
    Dense,
    /// Keep only the diagonal (the fast path for near-orthogonal pilots).
    Diagonal,
}

impl Default for Omega2Mode {
    fn default() -> Self {
        Omega2Mode::Auto
    }
}

/// Stopping rules for the MM iteration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative iterate-change stopping threshold.
    pub tol_rel: f64,
    /// Track the objective each iteration and fail loudly if it increases.
    pub objective_check: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 500,
            tol_rel: 1e-6,
            objective_check: false,
        }
    }
}

/// Minimum device distance from the base station; avoids unbounded path gains
/// under uniform-disc placement.
pub const MIN_DISTANCE_KM: f64 = 0.05;

/// Full scenario description for one simulated uplink slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Device count N.
    pub n: usize,
    /// BS antennas M.
    pub m: usize,
    /// Angular grid size; must equal `m` (the grid is then unitary).
    pub m_tilde: usize,
    /// Pilot length T.
    pub t: usize,
    /// Device active ratio.
    pub q_s: f64,
    /// Scattering clusters per device.
    pub n_c: usize,
    /// Received SNR averaged over devices, in dB.
    pub snr_db: f64,
    pub cell_radius_km: f64,
    pub adc_bits: AdcBits,
    /// Draw cluster AoAs from the grid angles instead of the continuum.
    #[serde(default)]
    pub on_grid_aoas: bool,
    #[serde(default)]
    pub omega2_mode: Omega2Mode,
    pub hyper: PriorHyper,
    #[serde(default)]
    pub solver: SolverOptions,
    pub seed: u64,
}

impl SystemConfig {
    /// Desk-scale default profile; fast enough for interactive runs and CI.
    pub fn desk_default() -> Self {
        let m_tilde = 32;
        SystemConfig {
            n: 50,
            m: 32,
            m_tilde,
            t: 64,
            q_s: 0.1,
            n_c: 3,
            snr_db: 10.0,
            cell_radius_km: 1.0,
            adc_bits: AdcBits::Finite(3),
            on_grid_aoas: false,
            omega2_mode: Omega2Mode::Auto,
            hyper: PriorHyper::default_for(0.1, m_tilde),
            solver: SolverOptions::default(),
            seed: 0,
        }
    }

    /// Profile matching the scale of the reference experiments
    /// (N=200, M=128, T=100). Minutes per trial; not exercised in CI.
    pub fn reference_scale() -> Self {
        let m_tilde = 128;
        SystemConfig {
            n: 200,
            m: 128,
            m_tilde,
            t: 100,
            q_s: 0.1,
            n_c: 3,
            snr_db: 10.0,
            cell_radius_km: 1.0,
            adc_bits: AdcBits::Finite(3),
            on_grid_aoas: false,
            omega2_mode: Omega2Mode::Auto,
            hyper: PriorHyper::default_for(0.1, m_tilde),
            solver: SolverOptions::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.t == 0 {
            return Err(Error::InvalidConfig("N, M, T must all be >= 1".into()));
        }
        if self.m_tilde != self.m {
            return Err(Error::InvalidConfig(format!(
                "unsupported configuration: m_tilde ({}) must equal m ({})",
                self.m_tilde, self.m
            )));
        }
        if !(0.0..=1.0).contains(&self.q_s) {
            return Err(Error::InvalidConfig("q_s must lie in [0, 1]".into()));
        }
        if self.n_c == 0 {
            return Err(Error::InvalidConfig("n_c must be >= 1".into()));
        }
        if self.n_c > self.m_tilde {
            return Err(Error::InvalidConfig(
                "n_c must not exceed the grid size m_tilde".into(),
            ));
        }
        if !(self.cell_radius_km > MIN_DISTANCE_KM) {
            return Err(Error::InvalidConfig(format!(
                "cell_radius_km must exceed the minimum distance {MIN_DISTANCE_KM}"
            )));
        }
        if let AdcBits::Finite(b) = self.adc_bits {
            if !(1..=12).contains(&b) {
                return Err(Error::InvalidConfig("adc_bits must be in 1..=12".into()));
            }
        }
        self.hyper.validate()?;
        if self.solver.max_iters == 0 || !(self.solver.tol_rel > 0.0) {
            return Err(Error::InvalidConfig(
                "solver options require max_iters >= 1 and tol_rel > 0".into(),
            ));
        }
        Ok(())
    }

    /// Noise variance implied by the configured SNR and the realized mean
    /// path gain: snr = mean(g) * E||h||^2 / sigma_v^2 with E||h||^2 = 1.
    pub fn noise_variance(&self, mean_gain: f64) -> f64 {
        mean_gain / 10f64.powf(self.snr_db / 10.0)
    }

    /// Prior variance of one real component of the aggregate vector x,
    /// E[x_i^2] = q_s * E|Hbar_(m,n)|^2 / 2 = q_s / (2 m_tilde).
    pub fn prior_component_variance(&self) -> f64 {
        self.q_s / (2.0 * self.m_tilde as f64)
    }
}
