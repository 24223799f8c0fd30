//! Python bindings for the spinsweep simulator.
//!
//! Structured reports cross the boundary as JSON and arrive as plain
//! dictionaries; numeric arrays are lists of floats.

use std::path::PathBuf;

use nalgebra::Vector3;
use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use spinsweep::cavity::{self, CavityMode, SpinBath};
use spinsweep::config::Config;
use spinsweep::dynamics::{self, DecayTrace, LambdaSystem, PropagationMethod};
use spinsweep::ensemble;
use spinsweep::fitkit::{self, map::linear_alc_map, AlcMapGuess, MapFitOptions, TransmissionMap};
use spinsweep::spectra;
use spinsweep::spinham::{Mj, Spin, SpinSystem, StevensCoefficients};
use spinsweep::Error;
use spinsweep_cli::{Ctx, FitKind, PopulationSource};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NotFound(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::NonConvergence { .. }
        | Error::SingularJacobian(_)
        | Error::TrackingAmbiguity { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn mj(s: &str) -> PyResult<Mj> {
    s.parse().map_err(py_err)
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Config", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: Config,
}

#[pymethods]
impl PyConfig {
    /// The shipped Gd3+:YVO4 configuration.
    #[staticmethod]
    fn default() -> Self {
        PyConfig {
            inner: Config::default_gd_yvo4(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: Config::from_toml_str(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: Config::load(&path).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn mode_labels(&self) -> Vec<String> {
        self.inner.modes.iter().map(|m| m.label.clone()).collect()
    }

    fn mode(&self, label: &str) -> PyResult<PyCavityMode> {
        Ok(PyCavityMode {
            inner: self.inner.mode(label).map_err(py_err)?,
        })
    }

    /// Single-spin coupling of a mode, GHz.
    fn g0(&self, label: &str) -> PyResult<f64> {
        self.inner.g0(label).map_err(py_err)
    }

    fn spin_system(&self) -> PyResult<PySpinSystem> {
        Ok(PySpinSystem {
            inner: self.inner.spin_system().map_err(py_err)?,
        })
    }

    #[getter]
    fn n_total(&self) -> f64 {
        self.inner.bath.n_total
    }

    #[getter]
    fn gamma_s_ghz(&self) -> f64 {
        self.inner.bath.gamma_s_ghz
    }

    /// Copy with protocol fields replaced; the result is validated.
    #[pyo3(signature = (*, b_turn_mt=None, b_end_mt=None, rate_mt_per_min=None, t_k=None, p_inc_w=None))]
    fn with_protocol(
        &self,
        b_turn_mt: Option<f64>,
        b_end_mt: Option<f64>,
        rate_mt_per_min: Option<f64>,
        t_k: Option<f64>,
        p_inc_w: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let mut c = self.inner.clone();
        let p = &mut c.protocol;
        p.b_turn_mt = b_turn_mt.unwrap_or(p.b_turn_mt);
        p.b_end_mt = b_end_mt.unwrap_or(p.b_end_mt);
        p.rate_mt_per_min = rate_mt_per_min.unwrap_or(p.rate_mt_per_min);
        p.t_k = t_k.unwrap_or(p.t_k);
        if let Some(w) = p_inc_w {
            c.dynamics.p_inc_w = w;
        }
        c.validate().map_err(py_err)?;
        Ok(PyConfig { inner: c })
    }
}

#[pyclass(name = "SpinSystem", frozen, from_py_object)]
#[derive(Clone)]
pub struct PySpinSystem {
    inner: SpinSystem,
}

impl PySpinSystem {
    /// Diagram on a grid from zero field through `b_mt`, so labels follow the branches.
    fn tracked(&self, b_hi: f64) -> PyResult<spinsweep::spinham::LevelDiagram> {
        let hi = b_hi.max(0.2);
        let n = (hi / 0.1).ceil() as usize;
        let grid: Vec<f64> = (0..=n).map(|k| hi * k as f64 / n as f64).collect();
        self.inner.sweep(&grid).map_err(py_err)
    }
}

#[pymethods]
impl PySpinSystem {
    #[new]
    #[pyo3(signature = (s, g_factor, b20, b40=0.0, b60=0.0, b44=0.0, b64=0.0, tilt_rad=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        s: f64,
        g_factor: f64,
        b20: f64,
        b40: f64,
        b60: f64,
        b44: f64,
        b64: f64,
        tilt_rad: f64,
    ) -> PyResult<Self> {
        let cf = StevensCoefficients {
            b20,
            b40,
            b60,
            b44,
            b64,
        };
        let spin = Spin::new(s).map_err(py_err)?;
        Ok(PySpinSystem {
            inner: SpinSystem::new(spin, g_factor, cf, tilt_rad).map_err(py_err)?,
        })
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.cf.to_array().to_vec()
    }

    /// Ascending eigenvalues at one field, GHz.
    fn energies(&self, b_mt: f64) -> Vec<f64> {
        spinsweep::spinham::eigensystem(&self.inner.hamiltonian(b_mt)).values
    }

    /// Branch labels and `energies[k][branch]` over an ascending grid.
    fn levels(&self, b_grid: Vec<f64>) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
        let d = self.inner.sweep(&b_grid).map_err(py_err)?;
        Ok((d.labels.iter().map(|l| l.to_string()).collect(), d.energies))
    }

    fn transition(&self, lower: &str, upper: &str, b_mt: f64) -> PyResult<f64> {
        let d = self.tracked(b_mt)?;
        Ok(
            spectra::transition_between(&d, mj(lower)?, mj(upper)?, b_mt)
                .map_err(py_err)?
                .f_ghz,
        )
    }

    /// Minimum splitting between two branches inside `[lo_mt, hi_mt]`.
    fn find_alc<'py>(
        &self,
        py: Python<'py>,
        a: &str,
        b: &str,
        lo_mt: f64,
        hi_mt: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let d = self.tracked(hi_mt)?;
        let alc = spectra::find_alc(&d, (mj(a)?, mj(b)?), (lo_mt, hi_mt)).map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("b_c_mT", alc.b_c_mt)?;
        out.set_item("gap_GHz", alc.gap_ghz)?;
        out.set_item("g_lz_GHz", alc.g_lz_ghz)?;
        Ok(out)
    }

    /// Weight of each |m> in the branch labelled `label` at `b_mt`.
    fn hybridization(&self, label: &str, b_mt: f64) -> PyResult<Vec<(String, f64)>> {
        let d = self.tracked(b_mt)?;
        let h = spectra::hybridization(&d, mj(label)?, b_mt).map_err(py_err)?;
        Ok(h.composition
            .iter()
            .map(|(m, w)| (m.to_string(), *w))
            .collect())
    }

    /// Zero-field thermal occupations carried to finite field.
    fn frozen_state(&self, temperature_k: f64, n_total: f64) -> PyResult<Vec<(String, f64)>> {
        let p = ensemble::frozen_state(&self.inner, temperature_k, n_total).map_err(py_err)?;
        Ok(p.labels
            .iter()
            .map(|l| l.to_string())
            .zip(p.counts)
            .collect())
    }
}

#[pyclass(name = "CavityMode", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyCavityMode {
    inner: CavityMode,
}

#[pymethods]
impl PyCavityMode {
    #[new]
    fn new(
        label: String,
        f0_ghz: f64,
        kappa_c_ghz: f64,
        gamma_d_ghz: f64,
        beta: f64,
    ) -> PyResult<Self> {
        Ok(PyCavityMode {
            inner: CavityMode::new(label, f0_ghz, kappa_c_ghz, gamma_d_ghz, beta)
                .map_err(py_err)?,
        })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn f0_ghz(&self) -> f64 {
        self.inner.f0_ghz
    }

    /// |S21| at `f_ghz` with a spin line at `f_s_ghz`.
    fn s21_abs(&self, f_ghz: f64, f_s_ghz: f64, gamma_s_ghz: f64, g_eff_ghz: f64) -> PyResult<f64> {
        let bath = SpinBath::new(f_s_ghz, gamma_s_ghz, g_eff_ghz).map_err(py_err)?;
        Ok(cavity::s21(f_ghz, &self.inner, &bath).norm())
    }

    fn s21_resonance(&self, g0_ghz: f64, gamma_s_ghz: f64, n_upper: f64) -> f64 {
        cavity::s21_resonance(&self.inner, g0_ghz, gamma_s_ghz, n_upper)
    }

    fn photon_number(&self, p_inc_w: f64) -> f64 {
        cavity::photon_number(p_inc_w, &self.inner)
    }
}

#[pyclass(name = "LambdaSystem", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyLambdaSystem {
    inner: LambdaSystem,
}

#[pymethods]
impl PyLambdaSystem {
    #[new]
    fn new(w: f64, gamma21: f64, gamma23: f64) -> PyResult<Self> {
        Ok(PyLambdaSystem {
            inner: LambdaSystem::new(w, gamma21, gamma23).map_err(py_err)?,
        })
    }

    fn rate_matrix(&self) -> Vec<Vec<f64>> {
        let m = dynamics::rate_matrix(&self.inner);
        (0..3)
            .map(|i| (0..3).map(|j| m[(i, j)]).collect())
            .collect()
    }

    /// `[0, slow, fast]`, 1/s.
    fn eigen_rates(&self) -> [f64; 3] {
        dynamics::eigen_rates(&self.inner)
    }

    fn time_grid(&self) -> Vec<f64> {
        dynamics::decay_time_grid(&self.inner)
    }

    /// Occupations `[n1, n2, n3]` at each time; `method` is "expm" or "adaptive".
    #[pyo3(signature = (n0, t, method="expm"))]
    fn propagate(&self, n0: [f64; 3], t: Vec<f64>, method: &str) -> PyResult<Vec<[f64; 3]>> {
        let method = match method {
            "expm" => PropagationMethod::Expm,
            "adaptive" => PropagationMethod::Adaptive,
            other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
        };
        let m = dynamics::rate_matrix(&self.inner);
        let p = dynamics::propagate(&m, Vector3::from(n0), &t, method).map_err(py_err)?;
        Ok(p.states.iter().map(|s| [s[0], s[1], s[2]]).collect())
    }
}

#[pyfunction]
fn lz_probability(g_lz_ghz: f64, slope_ghz_per_mt: f64, rate_mt_per_min: f64) -> PyResult<f64> {
    ensemble::lz_probability_from_coupling(g_lz_ghz, slope_ghz_per_mt, rate_mt_per_min)
        .map_err(py_err)
}

#[pyfunction]
fn pump_rate(g0_ghz: f64, n_cav: f64, gamma_s_ghz: f64) -> PyResult<f64> {
    dynamics::pump_rate(g0_ghz, n_cav, gamma_s_ghz).map_err(py_err)
}

/// Spin density in cm^-3 for the crystal of `config`.
#[pyfunction]
fn concentration(g_meas_ghz: f64, g0_ghz: f64, config: &PyConfig) -> PyResult<f64> {
    Ok(cavity::concentration(
        g_meas_ghz,
        g0_ghz,
        &config.inner.crystal().map_err(py_err)?,
    ))
}

/// Frozen preparation followed by the configured sweep.
#[pyfunction]
fn simulate_protocol<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let tr = spinsweep_cli::simulate_protocol(&config.inner).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("b_mT", &tr.b_mt)?;
    out.set_item(
        "labels",
        tr.populations[0]
            .labels
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>(),
    )?;
    let counts: Vec<Vec<f64>> = tr.populations.iter().map(|p| p.counts.clone()).collect();
    out.set_item("counts", counts)?;
    out.set_item("events", to_py(py, &tr.events)?)?;
    out.set_item("max_conservation_error", tr.max_conservation_error())?;
    Ok(out)
}

#[pyfunction]
fn analyze_decay<'py>(py: Python<'py>, t: Vec<f64>, n1: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let trace = DecayTrace::new(t, n1, None).map_err(py_err)?;
    to_py(py, &dynamics::analyze_decay(&trace).map_err(py_err)?)
}

/// |S21| map `values[b][f]` for a spin line linear in field.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn synthetic_alc_map(
    mode: &PyCavityMode,
    gamma_s_ghz: f64,
    g_eff_ghz: f64,
    b_res_mt: f64,
    slope_ghz_per_mt: f64,
    b_grid: Vec<f64>,
    f_grid: Vec<f64>,
) -> PyResult<Vec<Vec<f64>>> {
    let m = linear_alc_map(
        &mode.inner,
        gamma_s_ghz,
        g_eff_ghz,
        b_res_mt,
        slope_ghz_per_mt,
        &b_grid,
        &f_grid,
    );
    Ok(m.map_err(py_err)?.values)
}

/// Fitted parameters of an avoided-crossing map, by name.
#[pyfunction]
#[pyo3(signature = (b_grid, f_grid, values, mode, gamma_s_ghz, slope_ghz_per_mt, prominence=0.1))]
fn fit_alc_map(
    b_grid: Vec<f64>,
    f_grid: Vec<f64>,
    values: Vec<Vec<f64>>,
    mode: &PyCavityMode,
    gamma_s_ghz: f64,
    slope_ghz_per_mt: f64,
    prominence: f64,
) -> PyResult<Vec<(String, f64)>> {
    let map = TransmissionMap::new(b_grid, f_grid, values).map_err(py_err)?;
    let guess = AlcMapGuess {
        mode: mode.inner.clone(),
        gamma_s_ghz,
        slope_ghz_per_mt,
    };
    let opts = MapFitOptions {
        prominence,
        ..MapFitOptions::default()
    };
    let fit = fitkit::fit_alc_map(&map, &guess, &opts).map_err(py_err)?;
    Ok(fit.params.into_iter().map(|p| (p.name, p.value)).collect())
}

fn ctx(config: Option<&PyConfig>) -> PyResult<Ctx> {
    match config {
        Some(c) => Ctx::from_config(c.inner.clone()).map_err(py_err),
        None => Ctx::load(None).map_err(py_err),
    }
}

#[pyfunction]
#[pyo3(signature = (out, config=None, b_min=0.0, b_max=100.0, steps=1001))]
fn run_levels(
    out: PathBuf,
    config: Option<&PyConfig>,
    b_min: f64,
    b_max: f64,
    steps: usize,
) -> PyResult<usize> {
    let d = spinsweep_cli::cmd_levels(&ctx(config)?, b_min, b_max, steps, &out).map_err(py_err)?;
    Ok(d.b_grid.len())
}

#[pyfunction]
#[pyo3(signature = (out, config=None))]
fn run_lz<'py>(
    py: Python<'py>,
    out: PathBuf,
    config: Option<&PyConfig>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &spinsweep_cli::cmd_lz(&ctx(config)?, &out).map_err(py_err)?,
    )
}

/// Writes gtemp.csv and returns its header and rows.
#[pyfunction]
#[pyo3(signature = (out, config=None, t_min=0.02, t_max=0.2, steps=19))]
fn run_gtemp(
    out: PathBuf,
    config: Option<&PyConfig>,
    t_min: f64,
    t_max: f64,
    steps: usize,
) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    let t = spinsweep_cli::cmd_gtemp(&ctx(config)?, t_min, t_max, steps, &out).map_err(py_err)?;
    Ok((t.header, t.rows))
}

/// Writes transmission_<mode>.csv and returns `values[b][f]`.
#[pyfunction]
#[pyo3(signature = (out, mode, b_range, f_range, state="up", config=None))]
fn run_transmission(
    out: PathBuf,
    mode: &str,
    b_range: (f64, f64, usize),
    f_range: (f64, f64, usize),
    state: &str,
    config: Option<&PyConfig>,
) -> PyResult<Vec<Vec<f64>>> {
    let state: PopulationSource = state.parse().map_err(PyValueError::new_err)?;
    let m = spinsweep_cli::cmd_transmission(&ctx(config)?, mode, b_range, f_range, state, &out)
        .map_err(py_err)?;
    Ok(m.values)
}

#[pyfunction]
#[pyo3(signature = (out, config=None))]
fn run_decay<'py>(
    py: Python<'py>,
    out: PathBuf,
    config: Option<&PyConfig>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &spinsweep_cli::cmd_decay(&ctx(config)?, &out).map_err(py_err)?,
    )
}

/// `kind` is "map", "spectrum" or "decay".
#[pyfunction]
#[pyo3(signature = (out, kind, data, mode=None, config=None))]
fn run_fit<'py>(
    py: Python<'py>,
    out: PathBuf,
    kind: &str,
    data: PathBuf,
    mode: Option<&str>,
    config: Option<&PyConfig>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind: FitKind = kind.parse().map_err(PyValueError::new_err)?;
    to_py(
        py,
        &spinsweep_cli::cmd_fit(&ctx(config)?, kind, &data, mode, &out).map_err(py_err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (out, anchors, config=None))]
fn run_calibrate<'py>(
    py: Python<'py>,
    out: PathBuf,
    anchors: PathBuf,
    config: Option<&PyConfig>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &spinsweep_cli::cmd_calibrate(&ctx(config)?, &anchors, &out).map_err(py_err)?,
    )
}

#[pymodule(name = "spinsweep")]
pub mod spinsweep_module {
    #[pymodule_export]
    use super::{
        analyze_decay, concentration, fit_alc_map, lz_probability, pump_rate, run_calibrate,
        run_decay, run_fit, run_gtemp, run_levels, run_lz, run_transmission, simulate_protocol,
        synthetic_alc_map, PyCavityMode, PyConfig, PyLambdaSystem, PySpinSystem,
    };

    #[pymodule_export]
    const ANCHORS_TOML: &str = spinsweep::config::GD_YVO4_ANCHORS_TOML;
}
