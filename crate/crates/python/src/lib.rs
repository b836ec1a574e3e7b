//! Python bindings. Vectors cross the boundary as lists of floats, matrices as
//! lists of rows.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use spectral_transport_core as core;
use spectral_transport_core::harness::{self, ExperimentConfig};

fn to_py(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("ragged feature rows"));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn sampler(name: &str) -> PyResult<core::NoiseSampler> {
    match name {
        "gaussian" => Ok(core::NoiseSampler::Gaussian),
        "rademacher_scaled" => Ok(core::NoiseSampler::RademacherScaled),
        other => Err(PyValueError::new_err(format!("unknown sampler `{other}`"))),
    }
}

#[pyclass(name = "Spectrum", frozen)]
struct PySpectrum(core::Spectrum);

#[pymethods]
impl PySpectrum {
    #[new]
    fn new(eigenvalues: Vec<f64>) -> PyResult<Self> {
        core::Spectrum::new(eigenvalues).map(PySpectrum).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (p, d, scale = 1.0))]
    fn polynomial(p: f64, d: usize, scale: f64) -> PyResult<Self> {
        core::Spectrum::polynomial(p, d, scale).map(PySpectrum).map_err(to_py)
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn effective_dimension(&self, tau: f64) -> PyResult<f64> {
        self.0.effective_dimension(tau).map_err(to_py)
    }

    fn alignment_coefficient(&self, noise: &PyNoiseModel, tau: f64) -> PyResult<f64> {
        self.0.alignment_coefficient(&noise.0, tau).map_err(to_py)
    }

    fn source_target(&self, r: f64, radius: f64, g: Vec<f64>) -> PyResult<Vec<f64>> {
        let src = core::SourceCondition::new(r, radius, g).map_err(to_py)?;
        Ok(self.0.source_target(&src).map_err(to_py)?.as_slice().to_vec())
    }

    fn filtered_target(&self, w_star: Vec<f64>, tau: f64) -> PyResult<Vec<f64>> {
        let w = self.0.filtered_target(&w_star.into(), tau).map_err(to_py)?;
        Ok(w.as_slice().to_vec())
    }

    fn excess_risk(&self, w: Vec<f64>, w_star: Vec<f64>) -> PyResult<f64> {
        self.0.excess_risk(&w.into(), &w_star.into()).map_err(to_py)
    }

    fn transported_norm_sq(&self, tau: f64, u: Vec<f64>) -> PyResult<f64> {
        self.0.transported_norm_sq(tau, &u.into()).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Spectrum(dim={}, top={})", self.0.dim(), self.0.top())
    }
}

#[pyclass(name = "NoiseModel", frozen)]
struct PyNoiseModel(core::NoiseModel);

#[pymethods]
impl PyNoiseModel {
    #[staticmethod]
    #[pyo3(signature = (spectrum, variance, sampler_name = "gaussian"))]
    fn isotropic(spectrum: &PySpectrum, variance: f64, sampler_name: &str) -> PyResult<Self> {
        core::NoiseModel::isotropic(&spectrum.0, variance, sampler(sampler_name)?)
            .map(PyNoiseModel)
            .map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (loads, sampler_name = "gaussian"))]
    fn from_loads(loads: Vec<f64>, sampler_name: &str) -> PyResult<Self> {
        core::NoiseModel::from_loads(loads, sampler(sampler_name)?)
            .map(PyNoiseModel)
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_obstruction(spectrum: &PySpectrum, b: f64, q: f64) -> PyResult<Self> {
        core::noise_load_from_obstruction(&spectrum.0, b, q)
            .map(PyNoiseModel)
            .map_err(to_py)
    }

    #[getter]
    fn modal_loads(&self) -> Vec<f64> {
        self.0.modal_loads.clone()
    }
}

#[pyclass(name = "Sample", frozen)]
struct PySample(core::Sample);

#[pymethods]
impl PySample {
    #[new]
    fn new(features: Vec<Vec<f64>>, responses: Vec<f64>) -> PyResult<Self> {
        let x = matrix_from_rows(&features)?;
        core::Sample::new(x, DVector::from_vec(responses))
            .map(PySample)
            .map_err(to_py)
    }

    /// Draws `n` rows from the diagonal or Mercer design with `w⋆ = μ^(r−1/2) g`.
    #[staticmethod]
    #[pyo3(signature = (spectrum, noise, n, seed, r = 0.5, radius = 1.0, xi = "gaussian", mode = "diagonal"))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        spectrum: &PySpectrum,
        noise: &PyNoiseModel,
        n: usize,
        seed: u64,
        r: f64,
        radius: f64,
        xi: &str,
        mode: &str,
    ) -> PyResult<Self> {
        let xi = match xi {
            "gaussian" => harness::XiKind::Gaussian,
            "rademacher" => harness::XiKind::Rademacher,
            other => return Err(PyValueError::new_err(format!("unknown xi_kind `{other}`"))),
        };
        let mode = match mode {
            "diagonal" => harness::DesignMode::Diagonal,
            "mercer_cosine" => harness::DesignMode::MercerCosine,
            other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
        };
        let design = harness::DesignModel::new(spectrum.0.clone(), xi, mode);
        let src = core::SourceCondition::flat(r, radius, spectrum.0.dim()).map_err(to_py)?;
        harness::generate_sample(&design, &src, &noise.0, n, seed)
            .map(PySample)
            .map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        rows_of(self.0.features())
    }

    #[getter]
    fn responses(&self) -> Vec<f64> {
        self.0.responses().iter().copied().collect()
    }

    #[getter]
    fn latent_noise(&self) -> Option<Vec<f64>> {
        self.0.latent_noise().map(|e| e.iter().copied().collect())
    }

    fn max_residual(&self, w: Vec<f64>) -> f64 {
        self.0.max_residual(&w.into())
    }
}

#[pyclass(name = "Interpolant", frozen, get_all)]
struct PyInterpolant {
    weights: Vec<f64>,
    energy: f64,
    tau: f64,
    gram_rank: usize,
    max_residual: f64,
    interpolates: bool,
}

#[pyfunction]
fn minimal_interpolator(sample: &PySample, spectrum: &PySpectrum, tau: f64) -> PyResult<PyInterpolant> {
    let s = core::minimal_interpolator(&sample.0, &spectrum.0, tau).map_err(to_py)?;
    Ok(PyInterpolant {
        weights: s.weights.as_slice().to_vec(),
        energy: s.energy,
        tau: s.tau,
        gram_rank: s.gram_rank,
        max_residual: s.max_residual,
        interpolates: s.interpolates,
    })
}

#[pyfunction]
fn nullspace_spike(sample: &PySample, base: Vec<f64>, amplitude: f64, seed: u64) -> PyResult<Vec<f64>> {
    let w = core::nullspace_spike(&sample.0, &base.into(), amplitude, seed).map_err(to_py)?;
    Ok(w.as_slice().to_vec())
}

#[pyfunction]
fn stable_step_size(sample: &PySample, spectrum: &PySpectrum, tau: f64) -> PyResult<f64> {
    core::stable_step_size(&sample.0, &spectrum.0, tau).map_err(to_py)
}

/// Returns `(weights, iterations, converged)`.
#[pyfunction]
#[pyo3(signature = (sample, spectrum, tau, step_size = None, max_iters = 1_000_000, tolerance = 1e-10))]
fn pgf_solve(
    sample: &PySample,
    spectrum: &PySpectrum,
    tau: f64,
    step_size: Option<f64>,
    max_iters: usize,
    tolerance: f64,
) -> PyResult<(Vec<f64>, usize, bool)> {
    let mut cfg = core::FlowConfig::for_sample(&sample.0, &spectrum.0, tau).map_err(to_py)?;
    if let Some(eta) = step_size {
        cfg.step_size = eta;
    }
    cfg.max_iters = max_iters;
    cfg.tolerance = tolerance;
    let out = core::pgf_solve(&sample.0, &spectrum.0, tau, &cfg).map_err(to_py)?;
    Ok((out.weights.as_slice().to_vec(), out.iterations, out.converged))
}

/// Fredriksson surrogate on a fixed sample with replacements resampled from its rows.
/// Returns `(selected_tau, rows)` with rows `(tau, t_hat, n_hat, a_hat, index_sq, regime)`.
#[pyfunction]
#[pyo3(signature = (sample, spectrum, tau_grid, budget = 50, r_assumed = 0.5, lambda_weight = 1.0, seed = 0))]
#[allow(clippy::type_complexity)]
fn fredriksson_surrogate(
    sample: &PySample,
    spectrum: &PySpectrum,
    tau_grid: Vec<f64>,
    budget: usize,
    r_assumed: f64,
    lambda_weight: f64,
    seed: u64,
) -> PyResult<(f64, Vec<(f64, f64, f64, f64, f64, String)>)> {
    let cfg = core::SurrogateConfig {
        tau_grid,
        replacement_budget: budget,
        lambda_weight,
        r_assumed,
        pilot_ridge: None,
        seed,
        benign_rule: core::BenignRule::default(),
    };
    let source = core::EmpiricalResampler { sample: &sample.0 };
    let rep = core::fredriksson_surrogate(&sample.0, &spectrum.0, &cfg, &source).map_err(to_py)?;
    let rows = rep
        .components
        .iter()
        .map(|c| {
            let regime = core::regime_from_components(c, cfg.benign_rule);
            (c.tau, c.t_hat, c.n_hat, c.a_hat, c.index_sq, regime.label().to_string())
        })
        .collect();
    Ok((rep.selected_tau, rows))
}

#[pyclass(name = "Envelope", frozen)]
struct PyEnvelope(core::EnvelopeSpec);

#[pymethods]
impl PyEnvelope {
    #[new]
    #[pyo3(signature = (r, radius, p, s, q, c_stab = 1.0, c_spec = 1.0, c_align = 1.0, floor = 0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        r: f64,
        radius: f64,
        p: f64,
        s: f64,
        q: f64,
        c_stab: f64,
        c_spec: f64,
        c_align: f64,
        floor: f64,
    ) -> PyResult<Self> {
        let env = core::EnvelopeSpec {
            c_stab,
            c_spec,
            c_align,
            floor,
            ..core::EnvelopeSpec::new(r, radius, p, s, q)
        };
        env.validate().map_err(to_py)?;
        Ok(PyEnvelope(env))
    }

    fn value(&self, tau: f64, n: usize) -> PyResult<f64> {
        core::envelope_value(&self.0, tau, n).map_err(to_py)
    }

    /// `(bias, stability, spectrum, alignment, floor)`.
    fn components(&self, tau: f64, n: usize) -> (f64, f64, f64, f64, f64) {
        let c = core::envelope_components(&self.0, tau, n);
        (c.bias, c.stability, c.spectrum, c.alignment, c.floor)
    }

    /// `(tau_star, minimum)` over the default grid or the one given.
    #[pyo3(signature = (n, tau_grid = None))]
    fn oracle_scale(&self, n: usize, tau_grid: Option<Vec<f64>>) -> PyResult<(f64, f64)> {
        let grid = tau_grid.unwrap_or_else(core::phase::default_tau_grid);
        core::oracle_scale(&self.0, n, &grid).map_err(to_py)
    }

    /// `(gamma, regime, tau_exponent, risk_exponent, benign)`.
    fn dominant_exponent(&self) -> (f64, &'static str, f64, f64, bool) {
        let v = core::dominant_exponent(&self.0);
        let regime = match v.regime {
            core::PhaseRegime::Stability => "stability",
            core::PhaseRegime::Spectrum => "spectrum",
            core::PhaseRegime::Alignment => "alignment",
        };
        (v.gamma, regime, v.tau_exponent, v.risk_exponent, v.benign)
    }
}

#[pyfunction]
fn master_bound(bias: f64, t: f64, nh_over_n: f64, a: f64) -> PyResult<f64> {
    core::master_bound(bias, t, nh_over_n, a).map_err(to_py)
}

fn load_config(path: &str) -> PyResult<ExperimentConfig> {
    ExperimentConfig::load(std::path::Path::new(path)).map_err(to_py)
}

/// Runs the rate experiment from a config file. Returns `(slope, [(n, tau, risk_mean, risk_se)])`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn run_rate_experiment(py: Python<'_>, config_path: &str) -> PyResult<(Option<f64>, Vec<(usize, f64, f64, f64)>)> {
    let cfg = load_config(config_path)?;
    let rep = py.detach(|| harness::run_rate_experiment(&cfg)).map_err(to_py)?;
    let cells = rep.cells.iter().map(|c| (c.n, c.tau, c.risk_mean, c.risk_se)).collect();
    Ok((rep.slope, cells))
}

/// Runs the bound audit. Returns `[(n, tau, risk_mean, risk_se, bound, satisfied)]`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn run_bound_audit(py: Python<'_>, config_path: &str) -> PyResult<Vec<(usize, f64, f64, f64, f64, bool)>> {
    let cfg = load_config(config_path)?;
    let rep = py.detach(|| harness::run_bound_audit(&cfg)).map_err(to_py)?;
    Ok(rep
        .records
        .iter()
        .map(|r| (r.n, r.tau, r.risk_mean, r.risk_se, r.bound, r.satisfied))
        .collect())
}

#[pymodule]
fn spectral_transport(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyNoiseModel>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyInterpolant>()?;
    m.add_class::<PyEnvelope>()?;
    m.add_function(wrap_pyfunction!(minimal_interpolator, m)?)?;
    m.add_function(wrap_pyfunction!(nullspace_spike, m)?)?;
    m.add_function(wrap_pyfunction!(stable_step_size, m)?)?;
    m.add_function(wrap_pyfunction!(pgf_solve, m)?)?;
    m.add_function(wrap_pyfunction!(fredriksson_surrogate, m)?)?;
    m.add_function(wrap_pyfunction!(master_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_rate_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_bound_audit, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
