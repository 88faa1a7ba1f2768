//! Python bindings for the activity-detection and channel-estimation library.
//!
//! Exposes a `Config` class plus `run_trial`, `run_sweep`, `sweep_csv`,
//! `design_quantizer`, and `selftest`. Results come back as plain dicts and
//! lists so the module has no dependency beyond the interpreter itself.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyAny, PyDict};

use qadce_core::bussgang::{bussgang_gain, residual_variance};
use qadce_core::config::{AdcBits, PriorHyper, SystemConfig};
use qadce_core::quantizer::{lloyd_max_design, Quantizer};
use qadce_core::sim::{self, SweepAxis, SweepSpec, TrialOutput};

fn err(e: qadce_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_adc_bits(obj: &Bound<'_, PyAny>) -> PyResult<AdcBits> {
    if let Ok(b) = obj.extract::<u32>() {
        return Ok(AdcBits::Finite(b));
    }
    if let Ok(s) = obj.extract::<String>() {
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinite") {
            return Ok(AdcBits::Infinite);
        }
    }
    Err(PyValueError::new_err(
        "adc_bits must be an integer bit count or \"inf\"",
    ))
}

/// Scenario description; construction validates all parameters.
#[pyclass(module = "qadce")]
#[derive(Clone)]
struct Config {
    inner: SystemConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (
        n = 50, m = 32, t = 64, q_s = 0.1, n_c = 3, snr_db = 10.0,
        cell_radius_km = 1.0, adc_bits = None, on_grid_aoas = false,
        seed = 0, max_iters = 500, tol_rel = 1e-6
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: usize,
        m: usize,
        t: usize,
        q_s: f64,
        n_c: usize,
        snr_db: f64,
        cell_radius_km: f64,
        adc_bits: Option<Bound<'_, PyAny>>,
        on_grid_aoas: bool,
        seed: u64,
        max_iters: usize,
        tol_rel: f64,
    ) -> PyResult<Self> {
        let mut cfg = SystemConfig::desk_default();
        cfg.n = n;
        cfg.m = m;
        cfg.m_tilde = m;
        cfg.t = t;
        cfg.q_s = q_s;
        cfg.n_c = n_c;
        cfg.snr_db = snr_db;
        cfg.cell_radius_km = cell_radius_km;
        if let Some(obj) = adc_bits {
            cfg.adc_bits = parse_adc_bits(&obj)?;
        }
        cfg.on_grid_aoas = on_grid_aoas;
        cfg.seed = seed;
        cfg.solver.max_iters = max_iters;
        cfg.solver.tol_rel = tol_rel;
        cfg.hyper = PriorHyper::default_for(q_s, m);
        cfg.validate().map_err(err)?;
        Ok(Config { inner: cfg })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn adc_bits(&self) -> String {
        self.inner.adc_bits.to_string()
    }

    fn with_seed(&self, seed: u64) -> Config {
        let mut cfg = self.inner.clone();
        cfg.seed = seed;
        Config { inner: cfg }
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(n={}, m={}, t={}, q_s={}, snr_db={}, adc_bits={}, seed={})",
            self.inner.n,
            self.inner.m,
            self.inner.t,
            self.inner.q_s,
            self.inner.snr_db,
            self.inner.adc_bits,
            self.inner.seed
        )
    }
}

fn complex_rows(a: &ndarray::Array2<Complex64>) -> Vec<Vec<Complex64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn trial_dict<'py>(py: Python<'py>, out: &TrialOutput) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    let r = &out.record;
    d.set_item("seed", r.seed)?;
    d.set_item("mse", r.mse)?;
    d.set_item("nmse", r.nmse)?;
    d.set_item("tpr", r.tpr)?;
    d.set_item("fpr", r.fpr)?;
    d.set_item("iters", r.iters)?;
    d.set_item("converged", r.converged)?;
    d.set_item("n_active_true", r.n_active_true)?;
    d.set_item("n_active_est", r.n_active_est)?;
    d.set_item("active", out.detection.active.clone())?;
    d.set_item("active_true", out.scene.s.clone())?;
    d.set_item("log_odds", out.detection.log_odds.to_vec())?;
    d.set_item("threshold", out.detection.threshold)?;
    d.set_item("x_hat", complex_rows(&out.x_hat))?;
    d.set_item("x_true", complex_rows(&out.scene.x))?;
    Ok(d)
}

/// Run one seeded trial and return its metrics and estimates as a dict.
#[pyfunction]
fn run_trial<'py>(py: Python<'py>, config: &Config) -> PyResult<Bound<'py, PyDict>> {
    let out = sim::run_trial(&config.inner).map_err(err)?;
    trial_dict(py, &out)
}

fn parse_axis(axis: &str, values: &Bound<'_, PyAny>) -> PyResult<SweepAxis> {
    let items: Vec<Bound<'_, PyAny>> = values.iter()?.collect::<PyResult<_>>()?;
    if items.is_empty() {
        return Err(PyValueError::new_err("values must be non-empty"));
    }
    match axis {
        "pilot_length" => Ok(SweepAxis::PilotLength(
            items
                .iter()
                .map(|v| v.extract::<usize>())
                .collect::<PyResult<_>>()?,
        )),
        "snr_db" => Ok(SweepAxis::SnrDb(
            items
                .iter()
                .map(|v| v.extract::<f64>())
                .collect::<PyResult<_>>()?,
        )),
        "adc_bits" => Ok(SweepAxis::AdcBits(
            items.iter().map(parse_adc_bits).collect::<PyResult<_>>()?,
        )),
        other => Err(PyValueError::new_err(format!(
            "unknown axis {other:?}; expected pilot_length, snr_db, or adc_bits"
        ))),
    }
}

/// Sweep one parameter axis; returns a list of per-point aggregate dicts.
/// Trial `t` runs with seed `seed_base + t` at every axis point.
#[pyfunction]
#[pyo3(signature = (config, axis, values, trials = 50, seed_base = 0))]
fn run_sweep<'py>(
    py: Python<'py>,
    config: &Config,
    axis: &str,
    values: &Bound<'_, PyAny>,
    trials: usize,
    seed_base: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spec = SweepSpec {
        base: config.inner.clone(),
        axis: parse_axis(axis, values)?,
        trials,
        seed_base,
    };
    let records = py
        .allow_threads(|| sim::run_sweep(&spec))
        .map_err(err)?;
    records
        .iter()
        .map(|r| {
            let d = PyDict::new_bound(py);
            d.set_item("axis", &r.axis)?;
            d.set_item("value", &r.value)?;
            d.set_item("mse_mean", r.mse_mean)?;
            d.set_item("nmse_mean", r.nmse_mean)?;
            d.set_item("tpr_mean", r.tpr_mean)?;
            d.set_item("fpr_mean", r.fpr_mean)?;
            d.set_item("mse_se", r.mse_se)?;
            d.set_item("nmse_se", r.nmse_se)?;
            d.set_item("tpr_se", r.tpr_se)?;
            d.set_item("fpr_se", r.fpr_se)?;
            d.set_item("trials", r.trials)?;
            d.set_item("seed_base", r.seed_base)?;
            Ok(d)
        })
        .collect()
}

/// Sweep one parameter axis and return the aggregate table as a CSV string,
/// byte-identical to the command-line harness output.
#[pyfunction]
#[pyo3(signature = (config, axis, values, trials = 50, seed_base = 0))]
fn sweep_csv(
    py: Python<'_>,
    config: &Config,
    axis: &str,
    values: &Bound<'_, PyAny>,
    trials: usize,
    seed_base: u64,
) -> PyResult<String> {
    let spec = SweepSpec {
        base: config.inner.clone(),
        axis: parse_axis(axis, values)?,
        trials,
        seed_base,
    };
    let records = py
        .allow_threads(|| sim::run_sweep(&spec))
        .map_err(err)?;
    Ok(sim::sweep_csv(&records))
}

/// Design a Lloyd-Max quantizer for a zero-mean Gaussian input and report its
/// thresholds, levels, and Bussgang statistics.
#[pyfunction]
#[pyo3(signature = (bits, input_std = 1.0))]
fn design_quantizer(py: Python<'_>, bits: u32, input_std: f64) -> PyResult<Bound<'_, PyDict>> {
    let design = lloyd_max_design(bits, input_std).map_err(err)?;
    let q = Quantizer::Finite(design.clone());
    let d = PyDict::new_bound(py);
    d.set_item("bits", design.bits)?;
    d.set_item("input_std", input_std)?;
    d.set_item("thresholds", design.thresholds.clone())?;
    d.set_item("levels", design.levels.clone())?;
    d.set_item("bussgang_gain", bussgang_gain(&q, input_std))?;
    d.set_item(
        "residual_distortion_variance",
        residual_variance(&q, input_std),
    )?;
    Ok(d)
}

/// Run the built-in consistency checks; returns (name, passed, detail) tuples.
#[pyfunction]
fn selftest(py: Python<'_>) -> Vec<(String, bool, String)> {
    let reports = py.allow_threads(qadce_core::selftest::run_all);
    reports
        .into_iter()
        .map(|r| (r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pymodule]
fn qadce(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_csv, m)?)?;
    m.add_function(wrap_pyfunction!(design_quantizer, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
