//! Python bindings: beliefs, covariance updates, a stepping filter, sweeps, the
//! covariance-gap checks and the cubic demo.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nlkf::filter::{self, StepInputs};
use nlkf::harness::{self, ExperimentSpec, FilterConfig, SamplingControls};
use nlkf::propagators::{ekf_predict, iekf_update, MomentPropagator, PropagatorKind, UkfParams};
use nlkf::systems::{simulate_truth, SystemSpec};
use nlkf::{FilterError, FrameworkMode, SystemId};

fn err(e: FilterError) -> PyErr {
    match e {
        FilterError::InvalidConfig(_) | FilterError::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(
            "matrix rows must all have the same length",
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn system(name: &str) -> PyResult<SystemSpec> {
    if name == "constant-velocity" {
        return Ok(nlkf::systems::build_constant_velocity());
    }
    name.parse::<SystemId>().map(SystemId::build).map_err(err)
}

/// Gaussian belief: `mean` (list) and `cov` (list of rows).
#[pyclass(name = "StateBelief", module = "nlkf_py", from_py_object)]
#[derive(Clone)]
struct PyStateBelief {
    inner: filter::StateBelief,
}

#[pymethods]
impl PyStateBelief {
    #[new]
    fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> PyResult<Self> {
        let cov = matrix(&cov)?;
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(PyValueError::new_err(
                "cov must be square with the mean's dimension",
            ));
        }
        Ok(Self {
            inner: filter::StateBelief::new(vector(&mean), cov),
        })
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean.iter().copied().collect()
    }

    #[getter]
    fn cov(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.cov)
    }

    fn trace(&self) -> f64 {
        self.inner.trace()
    }

    fn __repr__(&self) -> String {
        format!(
            "StateBelief(mean={:?}, trace={:e})",
            self.mean(),
            self.trace()
        )
    }
}

/// `K = P_xy S^-1`.
#[pyfunction]
fn kalman_gain(p_xy: Vec<Vec<f64>>, s: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(
        &filter::kalman_gain(&matrix(&p_xy)?, &matrix(&s)?).map_err(err)?,
    ))
}

/// `P - K S K^T`.
#[pyfunction]
fn conventional_cov_update(
    p: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(
        &filter::conventional_cov_update(&matrix(&p)?, &matrix(&k)?, &matrix(&s)?).map_err(err)?,
    ))
}

/// `P + K S K^T - P_xy K^T - K P_xy^T`.
#[pyfunction]
fn general_cov_update(
    p: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    p_xy: Vec<Vec<f64>>,
) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(
        &filter::general_cov_update(&matrix(&p)?, &matrix(&k)?, &matrix(&s)?, &matrix(&p_xy)?)
            .map_err(err)?,
    ))
}

/// Result of one filter step.
#[pyclass(name = "Step", module = "nlkf_py", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyStep {
    prior: PyStateBelief,
    posterior: PyStateBelief,
    backed_out: bool,
}

/// A filter bound to one benchmark system.
#[pyclass(name = "Filter", module = "nlkf_py")]
struct PyFilter {
    system: SystemSpec,
    config: FilterConfig,
    prop: Option<Box<dyn MomentPropagator>>,
}

#[pymethods]
impl PyFilter {
    #[new]
    #[pyo3(signature = (system, filter = "ekf", framework = "new", alpha = 1e-3, beta = 2.0, kappa = 0.0))]
    fn new(
        system: &str,
        filter: &str,
        framework: &str,
        alpha: f64,
        beta: f64,
        kappa: f64,
    ) -> PyResult<Self> {
        let spec = self::system(system)?;
        let mode: FrameworkMode = framework.parse().map_err(err)?;
        let config = FilterConfig::grid(&[filter], &[mode]).map_err(err)?[0];
        let prop = match config {
            FilterConfig::Moment { kind, .. } => Some(kind.build(UkfParams { alpha, beta, kappa })),
            FilterConfig::Iekf => None,
        };
        Ok(Self {
            system: spec,
            config,
            prop,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.config.to_string()
    }

    /// Predict into step `k` and update with measurement `z` at noise level `sigma`.
    fn step(&self, belief: &PyStateBelief, z: Vec<f64>, k: usize, sigma: f64) -> PyResult<PyStep> {
        if k == 0 {
            return Err(PyValueError::new_err("steps are numbered from 1"));
        }
        let (u_prev, u) = (self.system.input(k - 1), self.system.input(k));
        let z = vector(&z);
        let r = self.system.measurement_cov(sigma);
        let inputs = StepInputs {
            k,
            u_prev: &u_prev,
            u: &u,
            z: &z,
            r: &r,
        };
        let rec = match &self.prop {
            Some(p) => filter::run_step(
                &self.system,
                p.as_ref(),
                self.config.mode(),
                &belief.inner,
                inputs,
            ),
            None => ekf_predict(&self.system, &belief.inner, &u_prev, k)
                .and_then(|prior| iekf_update(&self.system, prior, inputs)),
        }
        .map_err(err)?;
        Ok(PyStep {
            prior: PyStateBelief { inner: rec.prior },
            posterior: PyStateBelief {
                inner: rec.posterior,
            },
            backed_out: rec.backed_out,
        })
    }
}

/// Truth trajectory of one Monte Carlo run plus the filter's initial belief.
#[pyclass(name = "Trajectory", module = "nlkf_py", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyTrajectory {
    states: Vec<Vec<f64>>,
    measurements: Vec<Vec<f64>>,
    initial: PyStateBelief,
}

#[pyfunction]
#[pyo3(signature = (system, sigma, seed = 0, run_index = 0))]
fn simulate(system: &str, sigma: f64, seed: u64, run_index: u64) -> PyResult<PyTrajectory> {
    let spec = self::system(system)?;
    let bank = harness::make_noise_bank(seed, &spec, run_index);
    let truth = simulate_truth(&spec, &bank, sigma).map_err(err)?;
    let to_rows = |v: &[DVector<f64>]| v.iter().map(|x| x.iter().copied().collect()).collect();
    Ok(PyTrajectory {
        states: to_rows(&truth.states),
        measurements: to_rows(&truth.measurements),
        initial: PyStateBelief {
            inner: spec.initial_belief(&bank),
        },
    })
}

/// One CSV-equivalent row of a sweep.
#[pyclass(name = "SweepRow", module = "nlkf_py", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PySweepRow {
    system: String,
    filter: String,
    framework: String,
    sigma: f64,
    state_index: usize,
    rmse_actual: f64,
    rmse_estimated: f64,
    mean_step_time_ns: f64,
    backout_rate: f64,
    divergence_count: usize,
    runs: usize,
    seed: u64,
}

#[pyfunction]
#[pyo3(signature = (system, sigmas, filters = vec!["ekf".to_string(), "ekf2".to_string(), "ukf".to_string(), "ckf".to_string(), "iekf".to_string()], frameworks = vec!["old".to_string(), "new".to_string()], runs = 500, seed = 0, workers = 0))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    system: &str,
    sigmas: Vec<f64>,
    filters: Vec<String>,
    frameworks: Vec<String>,
    runs: usize,
    seed: u64,
    workers: usize,
) -> PyResult<Vec<PySweepRow>> {
    let spec_system = self::system(system)?;
    let modes: Vec<FrameworkMode> = frameworks
        .iter()
        .map(|f| f.parse().map_err(err))
        .collect::<PyResult<_>>()?;
    let names: Vec<&str> = filters.iter().map(String::as_str).collect();
    let configs = FilterConfig::grid(&names, &modes).map_err(err)?;
    let mut spec = ExperimentSpec::new(spec_system, configs, sigmas, runs, seed);
    spec.parallel_workers = workers;
    let result = py.detach(|| harness::run_sweep(&spec)).map_err(err)?;
    let mut out = Vec::new();
    for e in &result.entries {
        for (j, (act, est)) in e.rmse_final.iter().zip(&e.estimated_rmse).enumerate() {
            out.push(PySweepRow {
                system: result.system.clone(),
                filter: e.config.filter_name().into(),
                framework: e.config.framework_name().into(),
                sigma: e.sigma,
                state_index: j,
                rmse_actual: *act,
                rmse_estimated: *est,
                mean_step_time_ns: e.mean_step_time_ns,
                backout_rate: e.backout_rate,
                divergence_count: e.divergence_count,
                runs: e.runs,
                seed: result.seed,
            });
        }
    }
    Ok(out)
}

#[pyclass(
    name = "TheoremReport",
    module = "nlkf_py",
    get_all,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyTheoremReport {
    /// Mean gap (theorem 1) or mean bias (theorem 2).
    mean: Vec<Vec<f64>>,
    /// Minimum eigenvalue (theorem 1) or spectral norm (theorem 2).
    statistic: f64,
    stderr: f64,
    holds: bool,
}

fn controls(samples: usize, seed: u64, noise_scale: f64, dof: Option<f64>) -> SamplingControls {
    SamplingControls {
        noise_scale,
        dof: dof.filter(|d| d.is_finite()),
        samples,
        seed,
    }
}

/// Checks `E[P_ac - P_est] >= 0` for random moments of the given size.
#[pyfunction]
#[pyo3(signature = (n_x = 1, n_m = 1, samples = 100_000, seed = 0, noise_scale = 0.3, dof = Some(8.0)))]
fn theorem1(
    py: Python<'_>,
    n_x: usize,
    n_m: usize,
    samples: usize,
    seed: u64,
    noise_scale: f64,
    dof: Option<f64>,
) -> PyResult<PyTheoremReport> {
    let (p_xy, s) = harness::random_moments(n_x, n_m, seed);
    let c = controls(samples, seed, noise_scale, dof);
    let r = py
        .detach(|| harness::theorem1_check(&p_xy, &s, &c))
        .map_err(err)?;
    Ok(PyTheoremReport {
        mean: rows(&r.mean_gap),
        statistic: r.min_eig,
        stderr: r.stderr,
        holds: r.holds(),
    })
}

/// Checks that the recalibrated covariance is unbiased for independent draws.
#[pyfunction]
#[pyo3(signature = (n_x = 1, n_m = 1, samples = 100_000, seed = 0, noise_scale = 0.3, dof = Some(8.0), correlated = false))]
#[allow(clippy::too_many_arguments)]
fn theorem2(
    py: Python<'_>,
    n_x: usize,
    n_m: usize,
    samples: usize,
    seed: u64,
    noise_scale: f64,
    dof: Option<f64>,
    correlated: bool,
) -> PyResult<PyTheoremReport> {
    let (p_xy, s) = harness::random_moments(n_x, n_m, seed);
    let c = controls(samples, seed, noise_scale, dof);
    let r = py
        .detach(|| harness::theorem2_check(&p_xy, &s, &c, correlated))
        .map_err(err)?;
    Ok(PyTheoremReport {
        mean: rows(&r.mean_bias),
        statistic: r.norm,
        stderr: r.stderr,
        holds: r.holds(),
    })
}

#[pyclass(name = "CubicRow", module = "nlkf_py", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyCubicRow {
    filter: String,
    framework: String,
    true_state: f64,
    prior_mean: f64,
    prior_sigma: f64,
    posterior_mean: f64,
    posterior_sigma: f64,
    backed_out: bool,
}

#[pyfunction]
#[pyo3(signature = (sigma_y = 0.01))]
fn demo_cubic(sigma_y: f64) -> PyResult<Vec<PyCubicRow>> {
    Ok(harness::cubic_demo(sigma_y, UkfParams::default())
        .map_err(err)?
        .into_iter()
        .map(|r| PyCubicRow {
            filter: r.config.filter_name().into(),
            framework: r.config.framework_name().into(),
            true_state: r.true_state,
            prior_mean: r.prior_mean,
            prior_sigma: r.prior_sigma,
            posterior_mean: r.posterior_mean,
            posterior_sigma: r.posterior_sigma,
            backed_out: r.backed_out,
        })
        .collect())
}

#[pyfunction]
fn systems() -> Vec<&'static str> {
    let mut ids = nlkf::systems::valid_system_ids();
    ids.push("constant-velocity");
    ids
}

#[pyfunction]
fn propagators() -> Vec<&'static str> {
    PropagatorKind::ALL
        .iter()
        .map(|k| k.as_str())
        .chain(["iekf"])
        .collect()
}

#[pymodule]
fn nlkf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStateBelief>()?;
    m.add_class::<PyStep>()?;
    m.add_class::<PyFilter>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PySweepRow>()?;
    m.add_class::<PyTheoremReport>()?;
    m.add_class::<PyCubicRow>()?;
    m.add_function(wrap_pyfunction!(kalman_gain, m)?)?;
    m.add_function(wrap_pyfunction!(conventional_cov_update, m)?)?;
    m.add_function(wrap_pyfunction!(general_cov_update, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1, m)?)?;
    m.add_function(wrap_pyfunction!(theorem2, m)?)?;
    m.add_function(wrap_pyfunction!(demo_cubic, m)?)?;
    m.add_function(wrap_pyfunction!(systems, m)?)?;
    m.add_function(wrap_pyfunction!(propagators, m)?)?;
    Ok(())
}
