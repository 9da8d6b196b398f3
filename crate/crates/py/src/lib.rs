use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use risdoa::anm::{self, EstimatorOptions, GammaMode};
use risdoa::baselines::{self, GridDictionary};
use risdoa::geometry::{self, ArrayGeometry, GridSpacing};
use risdoa::harness::{self, ExperimentConfig, Method, TrialInput};
use risdoa::numerics::{CMatrix, CVector};
use risdoa::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Dimension(_) | Error::Parameter(_) | Error::Config { .. } | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn rows(m: &CMatrix) -> Vec<Vec<Complex64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn matrix(rows: Vec<Vec<Complex64>>) -> PyResult<CMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(CMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn parse_method(name: &str) -> PyResult<Method> {
    Method::ALL
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown method {name:?}; expected proposed, fft, omp or anm")))
}

fn parse_config(json: &str) -> PyResult<ExperimentConfig> {
    let config = ExperimentConfig::from_json_str(json).map_err(to_py)?;
    config.validate().map_err(to_py)?;
    Ok(config)
}

/// Element positions of a linear array.
#[pyclass(name = "Geometry", frozen)]
struct PyGeometry {
    inner: ArrayGeometry,
}

#[pymethods]
impl PyGeometry {
    /// Half-wavelength ULA with i.i.d. Gaussian position errors of std `sigma` wavelengths.
    #[staticmethod]
    #[pyo3(signature = (n_elements, sigma, seed, wavelength = 1.0))]
    fn nulra(n_elements: usize, sigma: f64, seed: u64, wavelength: f64) -> PyResult<Self> {
        let inner = geometry::make_nulra(n_elements, wavelength, sigma, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n_elements, wavelength = 1.0))]
    fn ula(n_elements: usize, wavelength: f64) -> PyResult<Self> {
        let inner = ArrayGeometry::ula(n_elements, wavelength).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn positions(&self) -> Vec<f64> {
        self.inner.positions().to_vec()
    }

    #[getter]
    fn wavelength(&self) -> f64 {
        self.inner.wavelength()
    }

    fn steering_vector(&self, theta_deg: f64) -> Vec<Complex64> {
        self.inner.steering_vector(theta_deg).iter().cloned().collect()
    }

    /// N×N matrix mapping ideal-ULA steering vectors onto this array's.
    #[pyo3(signature = (fit_points = geometry::DEFAULT_FIT_POINTS))]
    fn transformation(&self, fit_points: usize) -> PyResult<Vec<Vec<Complex64>>> {
        let grid = geometry::fit_grid(fit_points, GridSpacing::UniformAngle);
        let tm = geometry::compute_transformation(&self.inner, &grid).map_err(to_py)?;
        Ok(rows(&tm.t))
    }

    fn __repr__(&self) -> String {
        format!("Geometry(n_elements={}, sigma={})", self.inner.n_elements(), self.inner.sigma())
    }
}

/// One Monte-Carlo trial of an experiment config: array, RIS phases, noise.
#[pyclass(name = "Trial", frozen)]
struct PyTrial {
    config: ExperimentConfig,
    input: TrialInput,
}

#[pymethods]
impl PyTrial {
    #[new]
    #[pyo3(signature = (config_json = "{}", trial = 0))]
    fn new(config_json: &str, trial: usize) -> PyResult<Self> {
        let config = parse_config(config_json)?;
        let input = TrialInput::new(&config, trial).map_err(to_py)?;
        Ok(Self { config, input })
    }

    #[getter]
    fn received(&self) -> Vec<Complex64> {
        self.input.r().iter().cloned().collect()
    }

    #[getter]
    fn combined_matrix(&self) -> Vec<Vec<Complex64>> {
        rows(&self.input.c)
    }

    #[getter]
    fn transformation(&self) -> Vec<Vec<Complex64>> {
        rows(&self.input.transformation.t)
    }

    #[getter]
    fn targets_deg(&self) -> Vec<f64> {
        self.input.scenario.thetas_deg()
    }

    #[getter]
    fn geometry(&self) -> PyGeometry {
        PyGeometry {
            inner: self.input.geometry().clone(),
        }
    }

    /// Estimated directions (ascending) and the number of missing ones.
    fn estimate(&self, py: Python<'_>, method: &str) -> PyResult<(Vec<f64>, usize)> {
        let method = parse_method(method)?;
        py.detach(|| harness::run_method(method, &self.config, &self.input)).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (snr_db, m, k, mode = "paper-fit"))]
fn gamma_from_snr(snr_db: f64, m: usize, k: usize, mode: &str) -> PyResult<f64> {
    let mode = match mode {
        "paper-fit" => GammaMode::PaperFit,
        "theory" => GammaMode::Theory,
        other => return Err(PyValueError::new_err(format!("unknown gamma mode {other:?}"))),
    };
    anm::gamma_from_snr(snr_db, m, k, mode).map_err(to_py)
}

/// Atomic-norm estimate with transformation `t`; returns (angles, deficit, dual-bound ratio).
#[pyfunction]
fn estimate_doa(
    py: Python<'_>,
    r: Vec<Complex64>,
    c: Vec<Vec<Complex64>>,
    t: Vec<Vec<Complex64>>,
    k: usize,
    gamma: f64,
) -> PyResult<(Vec<f64>, usize, f64)> {
    let r = CVector::from_vec(r);
    let (c, t) = (matrix(c)?, matrix(t)?);
    let est = py
        .detach(|| anm::estimate_doa(&r, &c, &t, k, gamma, &EstimatorOptions::default()))
        .map_err(to_py)?;
    Ok((est.angles_deg, est.deficit, est.solution.dual_bound_ratio))
}

#[pyfunction]
#[pyo3(signature = (r, c, k, n_fft = baselines::DEFAULT_FFT_POINTS))]
fn fft_estimate(r: Vec<Complex64>, c: Vec<Vec<Complex64>>, k: usize, n_fft: usize) -> PyResult<(Vec<f64>, usize)> {
    let est = baselines::fft_estimate(&CVector::from_vec(r), &matrix(c)?, k, n_fft).map_err(to_py)?;
    Ok((est.angles_deg, est.deficit))
}

#[pyfunction]
#[pyo3(signature = (r, c, geometry, k, step_deg = baselines::DEFAULT_DICTIONARY_STEP_DEG))]
fn omp_estimate(
    r: Vec<Complex64>,
    c: Vec<Vec<Complex64>>,
    geometry: &PyGeometry,
    k: usize,
    step_deg: f64,
) -> PyResult<(Vec<f64>, usize)> {
    let c = matrix(c)?;
    let dict = GridDictionary::new(&c, &geometry.inner, step_deg).map_err(to_py)?;
    let est = baselines::omp_estimate(&CVector::from_vec(r), &dict, k).map_err(to_py)?;
    Ok((est.angles_deg, est.deficit))
}

/// RMSE in degrees under the best matching of estimates to targets.
#[pyfunction]
fn rmse(estimates: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    harness::rmse(&estimates, &truth).map_err(to_py)
}

/// Run a config's Monte-Carlo sweep; returns one dict per (point, method).
#[pyfunction]
fn run_benchmark(py: Python<'_>, config_json: &str) -> PyResult<Vec<Py<PyAny>>> {
    let config = parse_config(config_json)?;
    let result = py.detach(|| harness::run_sweep(&config)).map_err(to_py)?;
    let mut out = Vec::new();
    for point in &result.points {
        for s in &point.summaries {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("sweep_var", &point.sweep_var)?;
            d.set_item("sweep_value", point.sweep_value)?;
            d.set_item("method", s.method.name())?;
            d.set_item("rmse_deg", s.rmse_deg)?;
            d.set_item("mean_runtime_s", s.mean_runtime_s)?;
            d.set_item("trials", s.trials)?;
            d.set_item("failures", s.failures)?;
            out.push(d.into_any().unbind());
        }
    }
    Ok(out)
}

#[pymodule(name = "risdoa")]
fn risdoa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyTrial>()?;
    m.add_function(wrap_pyfunction!(gamma_from_snr, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_doa, m)?)?;
    m.add_function(wrap_pyfunction!(fft_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(omp_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    Ok(())
}
