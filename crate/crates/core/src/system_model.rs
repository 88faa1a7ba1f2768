//! Scene generation: activity, clustered angular channels, pilots, path loss,
//! and the unquantized received signal with its real-valued measurement model.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;

use crate::config::{SystemConfig, MIN_DISTANCE_KM};
use crate::linops::{complex_to_real, vec_mat, MeasurementOp};
use crate::{Error, Result};

/// One channel/activity realization.
#[derive(Debug, Clone)]
pub struct Scene {
    /// Binary activity vector, length N.
    pub s: Vec<u8>,
    /// Angular-domain channel, M_tilde x N.
    pub hbar: Array2<Complex64>,
    /// Large-scale gains, length N.
    pub g: Array1<f64>,
    /// Aggregate variable X = Hbar * diag(s), M_tilde x N.
    pub x: Array2<Complex64>,
    pub distances_km: Array1<f64>,
    /// Noise variance implied by the configured SNR and realized gains.
    pub sigma_v2: f64,
}

/// Unit-modulus pilot matrix, N x T.
#[derive(Debug, Clone)]
pub struct PilotMatrix {
    pub d: Array2<Complex64>,
}

/// Real-valued measurement model: y = Phi x_true + v.
#[derive(Debug, Clone)]
pub struct RealMeasurement {
    /// Real embedding of (G^{1/2} D)^T (x) U_R, held in factored form.
    pub phi: MeasurementOp,
    /// Unquantized real receive vector, length 2MT.
    pub y: Array1<f64>,
    /// [Re(vec X); Im(vec X)], length 2 M_tilde N.
    pub x_true: Array1<f64>,
    /// Realized real noise vector, length 2MT.
    pub noise: Array1<f64>,
    pub sigma_v2: f64,
}

/// Steering vector of a half-wavelength ULA: entry m is
/// `(1/sqrt(M)) exp(-j m pi sin(theta))`.
pub fn steering_vector(theta: f64, m: usize) -> Vec<Complex64> {
    let scale = 1.0 / (m as f64).sqrt();
    let phase = -PI * theta.sin();
    (0..m)
        .map(|k| Complex64::from_polar(scale, phase * k as f64))
        .collect()
}

/// Grid angles with `sin(theta)` uniform on [-1, 1 - 2/m_tilde].
pub fn grid_angles(m_tilde: usize) -> Vec<f64> {
    (0..m_tilde)
        .map(|i| (-1.0 + 2.0 * i as f64 / m_tilde as f64).asin())
        .collect()
}

/// Array-response matrix U_R, M x M_tilde; unitary for m_tilde = m.
pub fn build_grid(m: usize, m_tilde: usize) -> Result<Array2<Complex64>> {
    if m_tilde != m {
        return Err(Error::InvalidConfig(format!(
            "unsupported configuration: grid size {m_tilde} must equal antenna count {m}"
        )));
    }
    let mut u = Array2::zeros((m, m_tilde));
    for (i, theta) in grid_angles(m_tilde).iter().enumerate() {
        for (k, z) in steering_vector(*theta, m).into_iter().enumerate() {
            u[[k, i]] = z;
        }
    }
    Ok(u)
}

/// i.i.d. Bernoulli(q_s) activity draw.
pub fn sample_activity<R: Rng>(n: usize, q_s: f64, rng: &mut R) -> Vec<u8> {
    (0..n)
        .map(|_| if rng.gen::<f64>() < q_s { 1 } else { 0 })
        .collect()
}

/// Path gain at `distance_km`: 10^(-12.81 - 3.67 log10(c)).
pub fn large_scale_gain(distance_km: f64) -> f64 {
    debug_assert!(distance_km > 0.0);
    10f64.powf(-12.81 - 3.67 * distance_km.log10())
}

/// Uniform placement over the disc of radius `radius_km` with the minimum
/// exclusion distance; returns distances only.
pub fn place_devices<R: Rng>(n: usize, radius_km: f64, rng: &mut R) -> Array1<f64> {
    let lo = MIN_DISTANCE_KM * MIN_DISTANCE_KM;
    let hi = radius_km * radius_km;
    Array1::from_iter((0..n).map(|_| (lo + rng.gen::<f64>() * (hi - lo)).sqrt()))
}

/// Clustered small-scale channel of one device in antenna domain:
/// sum of N_c steering vectors with CN(0, 1/N_c) gains, so E||h||^2 = 1.
pub fn sample_device_channel<R: Rng>(
    m: usize,
    n_c: usize,
    on_grid: bool,
    rng: &mut R,
) -> Vec<Complex64> {
    let normal = Normal::new(0.0, (0.5 / n_c as f64).sqrt()).unwrap();
    let mut h = vec![Complex64::new(0.0, 0.0); m];
    let grid = if on_grid { Some(grid_angles(m)) } else { None };
    for _ in 0..n_c {
        let theta = match &grid {
            Some(angles) => angles[rng.gen_range(0..angles.len())],
            None => rng.gen_range(-PI / 2.0..PI / 2.0),
        };
        let zeta = Complex64::new(normal.sample(rng), normal.sample(rng));
        for (hk, uk) in h.iter_mut().zip(steering_vector(theta, m)) {
            *hk += zeta * uk;
        }
    }
    h
}

/// Angular-domain channel matrix Hbar = U_R^H H for all N devices.
pub fn sample_channel<R: Rng>(
    cfg: &SystemConfig,
    u_r: &Array2<Complex64>,
    rng: &mut R,
) -> Array2<Complex64> {
    let mut h = Array2::zeros((cfg.m, cfg.n));
    for n in 0..cfg.n {
        let col = sample_device_channel(cfg.m, cfg.n_c, cfg.on_grid_aoas, rng);
        for (m, z) in col.into_iter().enumerate() {
            h[[m, n]] = z;
        }
    }
    let uh = u_r.t().mapv(|z| z.conj());
    uh.dot(&h)
}

/// i.i.d. QPSK pilots from the alphabet {(+-1 +-j)/sqrt(2)}.
pub fn generate_pilots<R: Rng>(n: usize, t: usize, rng: &mut R) -> PilotMatrix {
    let mut d = Array2::zeros((n, t));
    for row in 0..n {
        for col in 0..t {
            let re = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let im = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            d[[row, col]] = Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2);
        }
    }
    PilotMatrix { d }
}

/// Draw a full scene (placement, gains, activity, channel, aggregate).
pub fn generate_scene<R: Rng>(
    cfg: &SystemConfig,
    u_r: &Array2<Complex64>,
    rng: &mut R,
) -> Scene {
    let distances_km = place_devices(cfg.n, cfg.cell_radius_km, rng);
    let g = distances_km.mapv(large_scale_gain);
    let s = sample_activity(cfg.n, cfg.q_s, rng);
    let hbar = sample_channel(cfg, u_r, rng);
    let mut x = hbar.clone();
    for (n, &sn) in s.iter().enumerate() {
        if sn == 0 {
            x.column_mut(n).fill(Complex64::new(0.0, 0.0));
        }
    }
    let mean_gain = g.mean().unwrap_or(0.0);
    let sigma_v2 = cfg.noise_variance(mean_gain);
    Scene {
        s,
        hbar,
        g,
        x,
        distances_km,
        sigma_v2,
    }
}

/// Unquantized received signal Y = U_R X G^{1/2} D + V and the matching
/// real-valued measurement model.
pub fn synthesize<R: Rng>(
    cfg: &SystemConfig,
    scene: &Scene,
    u_r: &Array2<Complex64>,
    pilots: &PilotMatrix,
    rng: &mut R,
) -> Result<(Array2<Complex64>, RealMeasurement)> {
    let (m, m_tilde) = u_r.dim();
    let (n, t) = pilots.d.dim();
    if m != cfg.m || m_tilde != cfg.m_tilde || n != cfg.n || t != cfg.t {
        return Err(Error::DimensionMismatch(format!(
            "synthesize: got U_R {m}x{m_tilde}, D {n}x{t} for config M={} M~={} N={} T={}",
            cfg.m, cfg.m_tilde, cfg.n, cfg.t
        )));
    }
    if scene.x.dim() != (cfg.m_tilde, cfg.n) {
        return Err(Error::DimensionMismatch("scene aggregate shape".into()));
    }

    // bmat = G^{1/2} D
    let mut bmat = pilots.d.clone();
    for (row, &gn) in scene.g.iter().enumerate() {
        let sq = gn.sqrt();
        bmat.row_mut(row).mapv_inplace(|z| z * sq);
    }

    let signal = u_r.dot(&scene.x).dot(&bmat);
    let comp_std = (scene.sigma_v2 / 2.0).sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut y_mat = signal.clone();
    for z in y_mat.iter_mut() {
        *z += Complex64::new(
            comp_std * normal.sample(rng),
            comp_std * normal.sample(rng),
        );
    }
    let noise_mat = &y_mat - &signal;

    let x_true = complex_to_real(&vec_mat(&scene.x));
    let y = complex_to_real(&vec_mat(&y_mat));
    let noise = complex_to_real(&vec_mat(&noise_mat));
    let phi = MeasurementOp::Kronecker {
        u_r: u_r.clone(),
        bmat,
    };
    Ok((
        y_mat,
        RealMeasurement {
            phi,
            y,
            x_true,
            noise,
            sigma_v2: scene.sigma_v2,
        },
    ))
}

impl Scene {
    /// Per-device CSV dump: `n,s,distance_km,gain,angular_energy`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,s,distance_km,gain,angular_energy")?;
        for n in 0..self.s.len() {
            let energy: f64 = self.hbar.column(n).iter().map(|z| z.norm_sqr()).sum();
            writeln!(
                w,
                "{},{},{:.8e},{:.8e},{:.8e}",
                n, self.s[n], self.distances_km[n], self.g[n], energy
            )?;
        }
        Ok(())
    }
}

impl RealMeasurement {
    /// CSV dump of the real vectors: `i,y,noise` then `j,x_true`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,y,noise")?;
        for i in 0..self.y.len() {
            writeln!(w, "{},{:.8e},{:.8e}", i, self.y[i], self.noise[i])?;
        }
        writeln!(w, "j,x_true")?;
        for j in 0..self.x_true.len() {
            writeln!(w, "{},{:.8e}", j, self.x_true[j])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn steering_broadside() {
        let u = steering_vector(0.0, 4);
        for z in u {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_endfire() {
        let u = steering_vector(PI / 2.0, 2);
        assert!((u[0] - Complex64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
        assert!((u[1] - Complex64::new(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_thirty_degrees() {
        // sin(pi/6) = 1/2, phase e^{-j pi/2} = -j
        let u = steering_vector(PI / 6.0, 2);
        assert!((u[1] - Complex64::new(0.0, -FRAC_1_SQRT_2)).norm() < 1e-12);
    }

    #[test]
    fn grid_two_antennas() {
        let u = build_grid(2, 2).unwrap();
        assert!((u[[0, 0]] - Complex64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
        assert!((u[[1, 0]] - Complex64::new(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
        assert!((u[[1, 1]] - Complex64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn grid_is_unitary() {
        for m in [1usize, 8, 64] {
            let u = build_grid(m, m).unwrap();
            let uh = u.t().mapv(|z| z.conj());
            let p = uh.dot(&u);
            for i in 0..m {
                for j in 0..m {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (p[[i, j]] - Complex64::new(expect, 0.0)).norm() < 1e-12,
                        "m={m} ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn grid_rejects_mismatch() {
        assert!(build_grid(4, 8).is_err());
    }

    #[test]
    fn activity_endpoints() {
        let mut r = rng(1);
        assert!(sample_activity(100, 0.0, &mut r).iter().all(|&s| s == 0));
        assert!(sample_activity(100, 1.0, &mut r).iter().all(|&s| s == 1));
    }

    #[test]
    fn activity_mean_matches_binomial() {
        let (n, q, seeds) = (200usize, 0.1, 1000u64);
        let mut total = 0usize;
        for seed in 0..seeds {
            let mut r = rng(seed);
            total += sample_activity(n, q, &mut r)
                .iter()
                .map(|&s| s as usize)
                .sum::<usize>();
        }
        let mean = total as f64 / seeds as f64;
        let sd_of_mean = (n as f64 * q * (1.0 - q) / seeds as f64).sqrt();
        assert!((mean - 20.0).abs() < 3.0 * sd_of_mean, "mean={mean}");
    }

    #[test]
    fn gain_values_and_monotonicity() {
        assert!((large_scale_gain(1.0).log10() + 12.81).abs() < 1e-12);
        assert!((large_scale_gain(10.0).log10() + 16.48).abs() < 1e-12);
        assert!(large_scale_gain(0.2) > large_scale_gain(0.5));
    }

    #[test]
    fn single_on_grid_cluster_is_one_angular_tap() {
        let mut cfg = SystemConfig::desk_default();
        cfg.m = 16;
        cfg.m_tilde = 16;
        cfg.n = 4;
        cfg.n_c = 1;
        cfg.on_grid_aoas = true;
        let u_r = build_grid(16, 16).unwrap();
        let mut r = rng(7);
        let hbar = sample_channel(&cfg, &u_r, &mut r);
        for n in 0..cfg.n {
            let nonzero = hbar
                .column(n)
                .iter()
                .filter(|z| z.norm() > 1e-9)
                .count();
            assert_eq!(nonzero, 1, "device {n}");
        }
    }

    #[test]
    fn angular_round_trip() {
        let mut cfg = SystemConfig::desk_default();
        cfg.m = 8;
        cfg.m_tilde = 8;
        cfg.n = 3;
        let u_r = build_grid(8, 8).unwrap();
        let mut r = rng(11);
        // Regenerate the same antenna-domain channel via a cloned RNG.
        let h_direct = {
            let mut rc = r.clone();
            let mut h = Array2::zeros((8, 3));
            for n in 0..3 {
                for (m, z) in sample_device_channel(8, cfg.n_c, false, &mut rc)
                    .into_iter()
                    .enumerate()
                {
                    h[[m, n]] = z;
                }
            }
            h
        };
        let hbar = sample_channel(&cfg, &u_r, &mut r);
        let back = u_r.dot(&hbar);
        for (a, b) in back.iter().zip(h_direct.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn channel_energy_is_normalized() {
        let mut r = rng(3);
        let draws = 10_000;
        let mut energies = Vec::with_capacity(draws);
        for _ in 0..draws {
            let h = sample_device_channel(8, 3, false, &mut r);
            energies.push(h.iter().map(|z| z.norm_sqr()).sum::<f64>());
        }
        let mean: f64 = energies.iter().sum::<f64>() / draws as f64;
        let var: f64 =
            energies.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / draws as f64;
        let sem = (var / draws as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sem, "mean={mean} sem={sem}");
    }

    #[test]
    fn pilots_are_unit_modulus() {
        let mut r = rng(5);
        let p = generate_pilots(20, 13, &mut r);
        for z in p.d.iter() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
        let single = generate_pilots(1, 1, &mut r);
        assert!((single.d[[0, 0]].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pilot_cross_correlation_concentrates() {
        let (n, t) = (40usize, 100usize);
        let mut ok = 0usize;
        let mut total = 0usize;
        for seed in 0..20u64 {
            let mut r = rng(seed);
            let p = generate_pilots(n, t, &mut r);
            let dh = p.d.mapv(|z| z.conj());
            let gram = p.d.dot(&dh.t());
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        total += 1;
                        if gram[[i, j]].norm() / t as f64 <= 0.5 {
                            ok += 1;
                        }
                    }
                }
            }
        }
        assert!(ok as f64 / total as f64 >= 0.99);
    }

    #[test]
    fn all_inactive_gives_pure_noise() {
        let mut cfg = SystemConfig::desk_default();
        cfg.n = 6;
        cfg.m = 4;
        cfg.m_tilde = 4;
        cfg.t = 8;
        cfg.q_s = 0.0;
        let u_r = build_grid(4, 4).unwrap();
        let mut r = rng(13);
        let scene = generate_scene(&cfg, &u_r, &mut r);
        let pilots = generate_pilots(cfg.n, cfg.t, &mut r);
        let (y, meas) = synthesize(&cfg, &scene, &u_r, &pilots, &mut r).unwrap();
        let v = crate::linops::real_to_complex(&meas.noise);
        for (i, z) in crate::linops::vec_mat(&y.clone()).iter().enumerate() {
            assert!((z - v[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn measurement_consistency() {
        let cfg = {
            let mut c = SystemConfig::desk_default();
            c.n = 6;
            c.m = 8;
            c.m_tilde = 8;
            c.t = 12;
            c.q_s = 0.5;
            c
        };
        let u_r = build_grid(8, 8).unwrap();
        let mut r = rng(17);
        let scene = generate_scene(&cfg, &u_r, &mut r);
        let pilots = generate_pilots(cfg.n, cfg.t, &mut r);
        let (_, meas) = synthesize(&cfg, &scene, &u_r, &pilots, &mut r).unwrap();
        let pred = meas.phi.apply(&meas.x_true) + &meas.noise;
        let err = (&meas.y - &pred).mapv(|v| v * v).sum().sqrt();
        let norm = meas.y.mapv(|v| v * v).sum().sqrt();
        assert!(err <= 1e-10 * norm.max(1e-300), "err={err} norm={norm}");
    }

    #[test]
    fn vectorization_identity_small() {
        for seed in 0..10u64 {
            let cfg = {
                let mut c = SystemConfig::desk_default();
                c.n = 3;
                c.m = 4;
                c.m_tilde = 4;
                c.t = 4;
                c.q_s = 0.7;
                c
            };
            let u_r = build_grid(4, 4).unwrap();
            let mut r = rng(seed);
            let scene = generate_scene(&cfg, &u_r, &mut r);
            let pilots = generate_pilots(cfg.n, cfg.t, &mut r);
            let (_, meas) = synthesize(&cfg, &scene, &u_r, &pilots, &mut r).unwrap();
            // Dense and factored operator must agree entrywise.
            let dense = meas.phi.to_dense();
            let via_dense = dense.dot(&meas.x_true);
            let via_op = meas.phi.apply(&meas.x_true);
            for (a, b) in via_dense.iter().zip(via_op.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn snr_calibration_matches_config() {
        let mut cfg = SystemConfig::desk_default();
        cfg.n = 30;
        cfg.m = 8;
        cfg.m_tilde = 8;
        let u_r = build_grid(8, 8).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for seed in 0..1000u64 {
            let mut r = rng(seed);
            let scene = generate_scene(&cfg, &u_r, &mut r);
            let mean_recv: f64 = (0..cfg.n)
                .map(|n| {
                    scene.g[n]
                        * scene
                            .hbar
                            .column(n)
                            .iter()
                            .map(|z| z.norm_sqr())
                            .sum::<f64>()
                })
                .sum::<f64>()
                / cfg.n as f64;
            num += mean_recv;
            den += scene.sigma_v2;
        }
        let snr_db = 10.0 * (num / den).log10();
        assert!(
            (snr_db - cfg.snr_db).abs() < 0.5,
            "empirical {snr_db} vs {}",
            cfg.snr_db
        );
    }
}
