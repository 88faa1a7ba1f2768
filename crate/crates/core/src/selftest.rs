//! Fast built-in consistency checks, exposed through the CLI `selftest`
//! subcommand. Each check is a reduced version of the heavier verification
//! suites: smaller sample counts, looser tolerances, seconds instead of
//! minutes.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bussgang::{bussgang_gain, residual_variance};
use crate::config::{AdcBits, PriorHyper, SystemConfig};
use crate::detector::detect;
use crate::linops::pair_sq_magnitudes;
use crate::quantizer::{lloyd_max_design, Quantizer};
use crate::sim::{run_trial, run_sweep, sweep_csv, SweepAxis, SweepSpec};
use crate::sparse_prior::{log_p0, log_p1};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn report(name: &'static str, passed: bool, detail: String) -> CheckReport {
    CheckReport {
        name,
        passed,
        detail,
    }
}

fn check_lloyd_max() -> CheckReport {
    let q = match lloyd_max_design(2, 1.0) {
        Ok(q) => q,
        Err(e) => return report("lloyd_max_reference", false, e.to_string()),
    };
    let t_ref = [-0.9816, 0.0, 0.9816];
    let l_ref = [-1.5104, -0.4528, 0.4528, 1.5104];
    let worst = q
        .thresholds
        .iter()
        .zip(t_ref)
        .chain(q.levels.iter().zip(l_ref))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    report(
        "lloyd_max_reference",
        worst < 1e-3,
        format!("max deviation from 2-bit reference design {worst:.2e}"),
    )
}

fn check_bussgang_monte_carlo() -> CheckReport {
    let q = match lloyd_max_design(3, 1.0) {
        Ok(q) => Quantizer::Finite(q),
        Err(e) => return report("bussgang_monte_carlo", false, e.to_string()),
    };
    let sigma = 1.3;
    let k = bussgang_gain(&q, sigma);
    let r = residual_variance(&q, sigma);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws = 200_000;
    let (mut ky, mut res2) = (0.0, 0.0);
    for _ in 0..draws {
        let y: f64 = sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        let qy = q.quantize_scalar(y);
        ky += qy * y;
        let e = qy - k * y;
        res2 += e * e;
    }
    let k_mc = ky / draws as f64 / (sigma * sigma);
    let r_mc = res2 / draws as f64;
    let ok = (k_mc - k).abs() < 0.01 && (r_mc - r).abs() / r.max(1e-12) < 0.1;
    report(
        "bussgang_monte_carlo",
        ok,
        format!("gain {k:.5} vs MC {k_mc:.5}; residual {r:.3e} vs MC {r_mc:.3e}"),
    )
}

fn check_detector_oracle() -> CheckReport {
    let h = PriorHyper {
        q_s: 0.1,
        a: 0.3,
        b: 0.05,
        epsilon: 0.01,
    };
    let m = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0usize;
    let cases = 1000;
    for _ in 0..cases {
        let scale = 10f64.powf(rng.gen_range(-3.0..1.0));
        let x = Array1::from_shape_fn(2 * m, |_| scale * rng.gen_range(-1.0..1.0));
        let t = pair_sq_magnitudes(&x);
        let t_dev = t.as_slice().unwrap();
        let oracle = u8::from(
            h.q_s.ln() + log_p1(t_dev, &h) > (1.0 - h.q_s).ln() + log_p0(t_dev, &h),
        );
        if detect(&x, m, &h).active[0] != oracle {
            mismatches += 1;
        }
    }
    report(
        "detector_posterior_odds",
        mismatches == 0,
        format!("{mismatches}/{cases} disagreements with the direct posterior-odds rule"),
    )
}

fn check_solver_descent() -> CheckReport {
    let m = 4;
    let mut cfg = SystemConfig {
        n: 6,
        m,
        m_tilde: m,
        t: 12,
        q_s: 0.3,
        n_c: 2,
        snr_db: 15.0,
        cell_radius_km: 0.5,
        adc_bits: AdcBits::Finite(2),
        on_grid_aoas: false,
        omega2_mode: Default::default(),
        hyper: PriorHyper::default_for(0.3, m),
        solver: Default::default(),
        seed: 0,
    };
    cfg.solver.objective_check = true;
    for seed in 0..5 {
        cfg.seed = seed;
        match run_trial(&cfg) {
            Ok(out) => {
                let t = &out.state.obj_trace;
                if t.len() < 2 || t.last() >= t.first() {
                    return report(
                        "solver_descent",
                        false,
                        format!("seed {seed}: objective did not decrease"),
                    );
                }
            }
            Err(e) => return report("solver_descent", false, format!("seed {seed}: {e}")),
        }
    }
    report(
        "solver_descent",
        true,
        "objective monotone within tolerance on 5 seeded trials".into(),
    )
}

fn check_sweep_determinism() -> CheckReport {
    let m = 4;
    let spec = SweepSpec {
        base: SystemConfig {
            n: 5,
            m,
            m_tilde: m,
            t: 8,
            q_s: 0.3,
            n_c: 2,
            snr_db: 10.0,
            cell_radius_km: 0.5,
            adc_bits: AdcBits::Finite(3),
            on_grid_aoas: false,
            omega2_mode: Default::default(),
            hyper: PriorHyper::default_for(0.3, m),
            solver: Default::default(),
            seed: 0,
        },
        axis: SweepAxis::SnrDb(vec![5.0, 15.0]),
        trials: 2,
        seed_base: 7,
    };
    let run = |spec: &SweepSpec| run_sweep(spec).map(|r| sweep_csv(&r));
    match (run(&spec), run(&spec)) {
        (Ok(a), Ok(b)) if a == b => {
            report("sweep_determinism", true, "repeated sweep output is byte-identical".into())
        }
        (Ok(_), Ok(_)) => report("sweep_determinism", false, "sweep outputs differ".into()),
        (Err(e), _) | (_, Err(e)) => report("sweep_determinism", false, e.to_string()),
    }
}

/// Run all checks and collect their reports.
pub fn run_all() -> Vec<CheckReport> {
    vec![
        check_lloyd_max(),
        check_bussgang_monte_carlo(),
        check_detector_oracle(),
        check_solver_descent(),
        check_sweep_determinism(),
    ]
}
