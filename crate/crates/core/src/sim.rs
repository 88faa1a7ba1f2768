//! Seeded Monte-Carlo trials and parameter sweeps.
//!
//! A trial is fully determined by its configuration (including the seed): it
//! draws a scene, synthesizes and quantizes the received signal, builds the
//! Bussgang-linearized model, runs the MM solver, and scores detection and
//! estimation. Sweeps vary one axis, run `trials` independent seeds per point
//! in parallel, and aggregate means and standard errors into CSV rows.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

use crate::bussgang::{build_effective_model, precompute};
use crate::config::{AdcBits, SystemConfig};
use crate::detector::{
    apply_support, detect, detection_rates, mse, nmse, reconstruct_channels, DetectionResult,
};
use crate::mm_solver::{solve, SolverState};
use crate::quantizer::Quantizer;
use crate::system_model::{build_grid, generate_pilots, generate_scene, synthesize, Scene};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-trial summary row.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub mse: f64,
    pub nmse: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub iters: usize,
    pub converged: bool,
    pub n_active_true: usize,
    pub n_active_est: usize,
}

/// Full output of one trial, for inspection beyond the summary metrics.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub record: TrialRecord,
    pub state: SolverState,
    pub detection: DetectionResult,
    /// Support-restricted estimate of the aggregate matrix, M_tilde x N.
    pub x_hat: Array2<Complex64>,
    pub scene: Scene,
}

/// Run one complete trial for the given configuration.
pub fn run_trial(cfg: &SystemConfig) -> Result<TrialOutput> {
    run_trial_inner(cfg).map_err(|source| Error::Trial {
        seed: cfg.seed,
        source: Box::new(source),
    })
}

fn run_trial_inner(cfg: &SystemConfig) -> Result<TrialOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u_r = build_grid(cfg.m, cfg.m_tilde)?;
    let scene = generate_scene(cfg, &u_r, &mut rng);
    let pilots = generate_pilots(cfg.n, cfg.t, &mut rng);
    let (_y_mat, meas) = synthesize(cfg, &scene, &u_r, &pilots, &mut rng)?;

    // All components of the pre-ADC signal share one std under this
    // calibration (unit-modulus pilots, unit-norm grid rows), so a single
    // scalar quantizer serves the whole receive vector.
    let pv = cfg.prior_component_variance();
    let sigma_y = crate::bussgang::output_std(&meas.phi, pv, meas.sigma_v2);
    let quantizer = Quantizer::from_bits(cfg.adc_bits, sigma_y[0])?;
    let r_obs = meas.y.mapv(|v| quantizer.quantize_scalar(v));

    let model = build_effective_model(meas.phi.clone(), &quantizer, meas.sigma_v2, pv)?;
    let coeffs = precompute(&model, &r_obs, cfg.omega2_mode)?;
    let state = solve(&model, &coeffs, &r_obs, cfg.m_tilde, &cfg.hyper, &cfg.solver)?;

    let detection = detect(&state.x, cfg.m_tilde, &cfg.hyper);
    let raw = reconstruct_channels(&state.x, cfg.m_tilde);
    let x_hat = apply_support(&raw, &detection.active);
    let err = mse(&x_hat, &scene.x);
    let rel = nmse(&x_hat, &scene.x);
    let (tpr, fpr) = detection_rates(&detection.active, &scene.s);
    let record = TrialRecord {
        seed: cfg.seed,
        mse: err,
        nmse: rel,
        tpr,
        fpr,
        iters: state.iter,
        converged: state.converged,
        n_active_true: scene.s.iter().map(|&s| s as usize).sum(),
        n_active_est: detection.active.iter().map(|&s| s as usize).sum(),
    };
    Ok(TrialOutput {
        record,
        state,
        detection,
        x_hat,
        scene,
    })
}

/// The parameter varied by a sweep.
#[derive(Debug, Clone, Serialize)]
pub enum SweepAxis {
    PilotLength(Vec<usize>),
    SnrDb(Vec<f64>),
    AdcBits(Vec<AdcBits>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::PilotLength(_) => "pilot_length",
            SweepAxis::SnrDb(_) => "snr_db",
            SweepAxis::AdcBits(_) => "adc_bits",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::PilotLength(v) => v.len(),
            SweepAxis::SnrDb(v) => v.len(),
            SweepAxis::AdcBits(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value_label(&self, i: usize) -> String {
        match self {
            SweepAxis::PilotLength(v) => v[i].to_string(),
            SweepAxis::SnrDb(v) => format!("{:.8e}", v[i]),
            SweepAxis::AdcBits(v) => v[i].to_string(),
        }
    }

    fn apply(&self, base: &SystemConfig, i: usize) -> SystemConfig {
        let mut cfg = base.clone();
        match self {
            SweepAxis::PilotLength(v) => cfg.t = v[i],
            SweepAxis::SnrDb(v) => cfg.snr_db = v[i],
            SweepAxis::AdcBits(v) => cfg.adc_bits = v[i],
        }
        cfg
    }
}

/// Sweep description: a base configuration, the varied axis, the number of
/// independent trials per point, and the base of the seed schedule. Trial `t`
/// runs with seed `seed_base + t` at every axis point, so points are compared
/// on common random scenes (paired comparison; much lower trend variance).
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: SystemConfig,
    pub axis: SweepAxis,
    pub trials: usize,
    pub seed_base: u64,
}

/// Aggregated metrics of one sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub axis: String,
    pub value: String,
    pub mse_mean: f64,
    pub nmse_mean: f64,
    pub tpr_mean: f64,
    pub fpr_mean: f64,
    pub mse_se: f64,
    pub nmse_se: f64,
    pub tpr_se: f64,
    pub fpr_se: f64,
    pub trials: usize,
    pub seed_base: u64,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Run a sweep: `trials` seeded trials per axis point, in parallel, with
/// deterministic aggregation order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    if spec.trials == 0 || spec.axis.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep requires at least one axis point and one trial".into(),
        ));
    }
    let mut out = Vec::with_capacity(spec.axis.len());
    for p in 0..spec.axis.len() {
        let cfg = spec.axis.apply(&spec.base, p);
        let records: Vec<TrialRecord> = (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let mut c = cfg.clone();
                c.seed = spec.seed_base + t as u64;
                run_trial(&c).map(|o| o.record)
            })
            .collect::<Result<Vec<_>>>()?;
        let mse_v: Vec<f64> = records.iter().map(|r| r.mse).collect();
        let nmse_v: Vec<f64> = records.iter().filter_map(|r| r.nmse).collect();
        let tpr_v: Vec<f64> = records.iter().filter_map(|r| r.tpr).collect();
        let fpr_v: Vec<f64> = records.iter().filter_map(|r| r.fpr).collect();
        let (mse_mean, mse_se) = mean_se(&mse_v);
        let (nmse_mean, nmse_se) = mean_se(&nmse_v);
        let (tpr_mean, tpr_se) = mean_se(&tpr_v);
        let (fpr_mean, fpr_se) = mean_se(&fpr_v);
        out.push(SweepRecord {
            axis: spec.axis.name().to_string(),
            value: spec.axis.value_label(p),
            mse_mean,
            nmse_mean,
            tpr_mean,
            fpr_mean,
            mse_se,
            nmse_se,
            tpr_se,
            fpr_se,
            trials: spec.trials,
            seed_base: spec.seed_base,
        });
    }
    Ok(out)
}

pub const SWEEP_CSV_HEADER: &str = "axis,value,mse_mean,nmse_mean,tpr_mean,fpr_mean,\
mse_se,nmse_se,tpr_se,fpr_se,trials,seed_base";

/// Serialize sweep records to CSV; fixed `{:.8e}` float formatting keeps the
/// output byte-identical across runs and platforms.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{},{}",
            r.axis,
            r.value,
            r.mse_mean,
            r.nmse_mean,
            r.tpr_mean,
            r.fpr_mean,
            r.mse_se,
            r.nmse_se,
            r.tpr_se,
            r.fpr_se,
            r.trials,
            r.seed_base
        )?;
    }
    Ok(())
}

/// Convenience wrapper returning the CSV as a string.
pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut buf = Vec::new();
    write_sweep_csv(records, &mut buf).expect("in-memory write cannot fail");
    String::from_utf8(buf).expect("csv is ascii")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AdcBits, PriorHyper};

    fn tiny_config(seed: u64) -> SystemConfig {
        let m = 4;
        SystemConfig {
            n: 6,
            m,
            m_tilde: m,
            t: 10,
            q_s: 0.3,
            n_c: 2,
            snr_db: 15.0,
            cell_radius_km: 0.5,
            adc_bits: AdcBits::Finite(3),
            on_grid_aoas: false,
            omega2_mode: Default::default(),
            hyper: PriorHyper::default_for(0.3, m),
            solver: Default::default(),
            seed,
        }
    }

    #[test]
    fn trial_runs_and_is_deterministic() {
        let cfg = tiny_config(3);
        let a = run_trial(&cfg).unwrap();
        let b = run_trial(&cfg).unwrap();
        assert_eq!(a.record.iters, b.record.iters);
        assert_eq!(a.record.nmse, b.record.nmse);
        for (x, y) in a.state.x.iter().zip(b.state.x.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = run_trial(&tiny_config(1)).unwrap();
        let b = run_trial(&tiny_config(2)).unwrap();
        let same = a
            .state
            .x
            .iter()
            .zip(b.state.x.iter())
            .all(|(x, y)| x == y);
        assert!(!same);
    }

    #[test]
    fn unquantized_trial_runs() {
        let mut cfg = tiny_config(9);
        cfg.adc_bits = AdcBits::Infinite;
        let out = run_trial(&cfg).unwrap();
        assert!(out.record.converged);
    }

    #[test]
    fn trial_errors_carry_seed() {
        let mut cfg = tiny_config(42);
        cfg.m_tilde = cfg.m + 1;
        match run_trial(&cfg) {
            Err(Error::Trial { seed, .. }) => assert_eq!(seed, 42),
            other => panic!("expected trial error, got {other:?}"),
        }
    }

    #[test]
    fn sweep_is_byte_identical_across_runs() {
        let spec = SweepSpec {
            base: tiny_config(0),
            axis: SweepAxis::SnrDb(vec![0.0, 10.0]),
            trials: 3,
            seed_base: 100,
        };
        let a = sweep_csv(&run_sweep(&spec).unwrap());
        let b = sweep_csv(&run_sweep(&spec).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with(SWEEP_CSV_HEADER));
        assert_eq!(a.lines().count(), 3);
    }

    #[test]
    fn sweep_axes_apply_the_right_field() {
        let base = tiny_config(0);
        let ax = SweepAxis::PilotLength(vec![8, 12]);
        assert_eq!(ax.apply(&base, 1).t, 12);
        let ax = SweepAxis::AdcBits(vec![AdcBits::Finite(1), AdcBits::Infinite]);
        assert_eq!(ax.apply(&base, 1).adc_bits, AdcBits::Infinite);
        assert_eq!(ax.value_label(1), "inf");
        let ax = SweepAxis::SnrDb(vec![-5.0]);
        assert_eq!(ax.apply(&base, 0).snr_db, -5.0);
    }

    #[test]
    fn sweep_rejects_empty_plans() {
        let spec = SweepSpec {
            base: tiny_config(0),
            axis: SweepAxis::SnrDb(vec![]),
            trials: 1,
            seed_base: 0,
        };
        assert!(run_sweep(&spec).is_err());
        let spec = SweepSpec {
            base: tiny_config(0),
            axis: SweepAxis::SnrDb(vec![0.0]),
            trials: 0,
            seed_base: 0,
        };
        assert!(run_sweep(&spec).is_err());
    }

    #[test]
    fn mean_se_reference() {
        let (m, s) = mean_se(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-15);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(mean_se(&[]).0.is_nan());
        assert_eq!(mean_se(&[5.0]), (5.0, 0.0));
    }
}
