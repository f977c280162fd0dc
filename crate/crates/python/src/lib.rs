use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rlshape::config::{Backend, Command, RunConfig};
use rlshape::experiments::{grid_values, walk_comparison};
use rlshape::flow::{reward_r1, reward_r2, sample_line, solve_channel, ChannelConfig, StokesObjective};
use rlshape::geometry::{build_airfoil, AirfoilSpec};
use rlshape::grid_mdp::{self, make_neighborhood, ActionSet, GridPoint, ParameterGrid};
use rlshape::reduction;
use rlshape::value::{self, CoolingSchedule, ScheduleKind};
use rlshape::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Backend(_) | Error::Solver(_) | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn config_from(json: Option<&str>) -> PyResult<RunConfig> {
    match json {
        Some(s) => RunConfig::from_json(s).map_err(py_err),
        None => Ok(RunConfig::default()),
    }
}

fn schedule(kind: &str, t0: f64) -> PyResult<CoolingSchedule> {
    let kind = match kind {
        "standard-log" => ScheduleKind::StandardLog,
        "inverse-log" => ScheduleKind::InverseLog,
        other => return Err(PyValueError::new_err(format!("unknown schedule `{other}`"))),
    };
    Ok(CoolingSchedule::new(kind, t0))
}

/// Regular parameter grid.
#[pyclass(name = "Grid")]
struct PyGrid {
    inner: ParameterGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(min: Vec<f64>, max: Vec<f64>, step: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: ParameterGrid::new(min, max, step).map_err(py_err)?,
        })
    }

    fn counts(&self) -> Vec<usize> {
        self.inner.counts().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn point(&self, index: Vec<usize>) -> PyResult<Vec<f64>> {
        let p = GridPoint(index);
        if !self.inner.contains(&p) {
            return Err(PyValueError::new_err(format!("index {:?} outside the grid", p.0)));
        }
        Ok(self.inner.point(&p))
    }

    fn locate(&self, theta: Vec<f64>) -> PyResult<Vec<usize>> {
        self.inner.locate(&theta).map(|p| p.0).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Grid(counts={:?})", self.inner.counts())
    }
}

/// Two-root airfoil with superimposed camber.
#[pyclass(name = "Airfoil")]
struct PyAirfoil {
    inner: AirfoilSpec,
}

#[pymethods]
impl PyAirfoil {
    #[new]
    #[pyo3(signature = (f, b, camber_amplitude = 0.3))]
    fn new(f: f64, b: f64, camber_amplitude: f64) -> PyResult<Self> {
        let inner = AirfoilSpec::new(f, b)
            .and_then(|s| s.with_camber_amplitude(camber_amplitude))
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    fn z_upper(&self, x: f64) -> f64 {
        self.inner.z_upper(x)
    }

    fn z_lower(&self, x: f64) -> f64 {
        self.inner.z_lower(x)
    }

    /// `(x, z_upper, z_lower)` on a cosine-clustered abscissa.
    fn sample(&self, n: usize) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let s = build_airfoil(&self.inner, n).map_err(py_err)?;
        Ok((s.x_samples, s.z_upper, s.z_lower))
    }
}

/// Stokes channel objective; `config_json` holds `ChannelConfig` fields.
#[pyclass(name = "StokesObjective")]
struct PyStokes {
    inner: StokesObjective,
}

#[pymethods]
impl PyStokes {
    #[new]
    #[pyo3(signature = (config_json = None))]
    fn new(config_json: Option<&str>) -> PyResult<Self> {
        let config: ChannelConfig = match config_json {
            Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => ChannelConfig::default(),
        };
        Ok(Self {
            inner: StokesObjective::new(config).map_err(py_err)?,
        })
    }

    /// `(R1, R2, R)` at `(f, b)`.
    fn evaluate(&self, f: f64, b: f64) -> PyResult<(f64, f64, f64)> {
        let (_, t) = self.inner.solve(f, b).map_err(py_err)?;
        Ok((t.r1.unwrap_or(f64::NAN), t.r2.unwrap_or(f64::NAN), t.total))
    }

    /// `(R1, R2)` with no profile in the channel.
    fn empty_channel(&self) -> PyResult<(f64, f64)> {
        let field = solve_channel(None, &self.inner.config).map_err(py_err)?;
        let p = sample_line(&field, &self.inner.config).map_err(py_err)?;
        Ok((reward_r1(&p).map_err(py_err)?, reward_r2(&p).map_err(py_err)?))
    }

    #[getter]
    fn simulations(&self) -> u64 {
        use rlshape::flow::Objective;
        self.inner.simulations()
    }
}

#[pyfunction]
fn synthetic_valley(f: f64, b: f64) -> f64 {
    rlshape::flow::synthetic_valley_2d(f, b)
}

#[pyfunction]
fn fictitious(x: f64) -> f64 {
    rlshape::flow::fictitious_1d(x)
}

/// Dense Metropolis kernel on the box of `radii` around `center`.
/// `values` follow the box members in lexicographic order.
#[pyfunction]
#[pyo3(signature = (grid, center, radii, values, beta, changeable = None))]
fn transition_matrix(
    grid: &PyGrid,
    center: Vec<usize>,
    radii: Vec<usize>,
    values: Vec<f64>,
    beta: f64,
    changeable: Option<Vec<bool>>,
) -> PyResult<Vec<Vec<f64>>> {
    let nb = make_neighborhood(&grid.inner, &GridPoint(center), &radii).map_err(py_err)?;
    let actions = changeable
        .map(ActionSet::from_mask)
        .unwrap_or_else(|| ActionSet::all(grid.inner.dim()));
    let m = grid_mdp::transition_matrix(&nb, &values, &actions, beta).map_err(py_err)?;
    Ok(m.dense())
}

/// Self-consistent value function on a box; returns
/// `(member coordinates, values, iterations, converged)`.
#[pyfunction]
#[pyo3(signature = (grid, center, radii, values, gamma = 0.9, t0 = 0.01, kind = "standard-log", tol_v = 1e-2, max_j = 30))]
#[allow(clippy::too_many_arguments)]
fn value_fixed_point(
    grid: &PyGrid,
    center: Vec<usize>,
    radii: Vec<usize>,
    values: Vec<f64>,
    gamma: f64,
    t0: f64,
    kind: &str,
    tol_v: f64,
    max_j: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, usize, bool)> {
    let nb = make_neighborhood(&grid.inner, &GridPoint(center), &radii).map_err(py_err)?;
    let actions = ActionSet::all(grid.inner.dim());
    let t = value::value_fixed_point(&nb, &values, &actions, gamma, &schedule(kind, t0)?, tol_v, max_j)
        .map_err(py_err)?;
    let coords = t.members.iter().map(|p| grid.inner.point(p)).collect();
    Ok((coords, t.values, t.iterations, t.converged))
}

/// Runs the optimizer and returns the trace as a JSON string.
#[pyfunction]
#[pyo3(signature = (backend = "synthetic", start = None, config_json = None))]
fn optimize(backend: &str, start: Option<Vec<f64>>, config_json: Option<&str>) -> PyResult<String> {
    let mut cfg = config_from(config_json)?;
    let backend: Backend = backend.parse().map_err(py_err)?;
    if start.is_some() {
        cfg.optimize.start = start;
    }
    cfg.validate(Command::Optimize, backend).map_err(py_err)?;
    let grid = cfg.grid_for(Command::Optimize, backend).map_err(py_err)?;
    let theta0 = grid.locate(&cfg.optimize_start(backend)).map_err(py_err)?;
    let objective = backend.objective(&cfg.channel).map_err(py_err)?;
    let trace = reduction::run(&theta0, &grid, &cfg.optimizer_for(backend), objective.as_ref()).map_err(py_err)?;
    serde_json::to_string(&trace).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Mean first-passage times `(fixed, free)` of the two walk modes.
#[pyfunction]
#[pyo3(signature = (config_json = None, seed = 0))]
fn walk_means(config_json: Option<&str>, seed: u64) -> PyResult<(f64, f64)> {
    let cfg = config_from(config_json)?;
    let backend = cfg.backend_for(Command::Walk);
    cfg.validate(Command::Walk, backend).map_err(py_err)?;
    let grid = cfg.grid_for(Command::Walk, backend).map_err(py_err)?;
    let objective = backend.objective(&cfg.channel).map_err(py_err)?;
    let values = grid_values(&grid, objective.as_ref()).map_err(py_err)?;
    let w = &cfg.walk;
    let start = grid.locate(&w.start).map_err(py_err)?;
    let c = walk_comparison(&grid, &values, &start, w.n_walks, w.max_steps, &w.schedule, seed).map_err(py_err)?;
    Ok((c.fixed.mean, c.free.mean))
}

#[pymodule]
fn rlshape_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyAirfoil>()?;
    m.add_class::<PyStokes>()?;
    m.add_function(wrap_pyfunction!(synthetic_valley, m)?)?;
    m.add_function(wrap_pyfunction!(fictitious, m)?)?;
    m.add_function(wrap_pyfunction!(transition_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(value_fixed_point, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(walk_means, m)?)?;
    m.add("TRACE_SCHEMA_VERSION", reduction::TRACE_SCHEMA_VERSION)?;
    Ok(())
}
