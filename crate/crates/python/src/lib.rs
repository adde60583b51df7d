//! Python bindings for `sarid`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use sarid::accumulator::{accumulate as accumulate_stats, IoData, MomentStats};
use sarid::gpca::{assign_regressor, CandidatePool, FactorizationResult};
use sarid::pipeline::{self, NoiseSpec};
use sarid::simulator::{self, InputPolicy, NoiseSource, SimConfig, SwitchingPolicy};
use sarid::solver::{ScaleFamily, ScanOptions};
use sarid::{Error, ExponentBasis, ModelOrders, NoiseModel, Submodel, SubmodelSet};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(msg) => PyIOError::new_err(msg),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn orders_of(t: (usize, usize, usize)) -> PyResult<ModelOrders> {
    ModelOrders::new(t.0, t.1, t.2).map_err(py_err)
}

type PySubmodel = (Vec<f64>, Vec<f64>);

fn submodel_set(models: Vec<PySubmodel>) -> PyResult<SubmodelSet> {
    let first = models
        .first()
        .ok_or_else(|| PyValueError::new_err("at least one submodel is required"))?;
    let orders = orders_of((models.len(), first.0.len(), first.1.len()))?;
    let models = models
        .into_iter()
        .map(|(a, c)| Submodel::new(a, c))
        .collect();
    SubmodelSet::new(models, orders).map_err(py_err)
}

fn submodel_tuples(set: &SubmodelSet) -> Vec<PySubmodel> {
    set.models()
        .iter()
        .map(|m| (m.a.clone(), m.c.clone()))
        .collect()
}

/// Simulated trajectory. Arrays share the time index `k = start, start + 1, ...`.
#[pyclass(name = "Dataset", frozen)]
pub struct PyDataset {
    inner: simulator::SimulatedDataset,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn start(&self) -> i64 {
        self.inner.start
    }
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.inner.u.clone()
    }
    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x.clone()
    }
    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.clone()
    }
    #[getter]
    fn eta(&self) -> Vec<f64> {
        self.inner.eta.clone()
    }
    /// Zero-based active mode for `k = 0..N-1`.
    #[getter]
    fn modes(&self) -> Vec<usize> {
        self.inner.modes.clone()
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
    fn __len__(&self) -> usize {
        self.inner.n_samples()
    }
}

/// Mergeable sufficient statistics of a dataset.
#[pyclass(name = "MomentStats", skip_from_py_object)]
#[derive(Clone)]
pub struct PyMomentStats {
    inner: MomentStats,
}

#[pymethods]
impl PyMomentStats {
    #[getter]
    fn count(&self) -> u64 {
        self.inner.count()
    }

    fn merge(&mut self, other: &PyMomentStats) -> PyResult<()> {
        self.inner.merge(&other.inner).map_err(py_err)
    }

    /// Moment-corrected matrix for Gaussian noise of variance `s2`, as rows.
    fn assemble(&self, s2: f64) -> PyResult<Vec<Vec<f64>>> {
        let m = self
            .inner
            .assemble(&NoiseModel::gaussian_variance(s2))
            .map_err(py_err)?;
        Ok(m.matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect())
    }
}

/// Outcome of an identification run.
#[pyclass(name = "Identification", frozen)]
pub struct PyIdentification {
    orders: ModelOrders,
    #[pyo3(get)]
    coefficients: Vec<f64>,
    #[pyo3(get)]
    sigma_min: f64,
    #[pyo3(get)]
    sigma_max: f64,
    #[pyo3(get)]
    n_samples: u64,
    /// `[(a, c), ..]` per recovered submodel.
    #[pyo3(get)]
    submodels: Vec<PySubmodel>,
    /// Estimated noise standard deviation when scanning.
    #[pyo3(get)]
    s_star: Option<f64>,
    #[pyo3(get)]
    below_threshold: Option<bool>,
    /// `[(s, sigma_min), ..]` when scanning.
    #[pyo3(get)]
    curve: Vec<(f64, f64)>,
    /// Seconds per phase.
    #[pyo3(get)]
    timings: Vec<(String, f64)>,
}

#[pymethods]
impl PyIdentification {
    /// Monomial label of every coefficient, e.g. `x0^1*x1^1`.
    #[getter]
    fn labels(&self) -> Vec<String> {
        let basis = ExponentBasis::new(self.orders);
        (0..basis.len()).map(|i| basis.label(i)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Identification(orders={}, n_samples={}, sigma_min={:e})",
            self.orders, self.n_samples, self.sigma_min
        )
    }
}

fn identification(
    orders: ModelOrders,
    ident: pipeline::Identification,
    factorization: FactorizationResult,
) -> PyIdentification {
    let t = ident.timings;
    PyIdentification {
        orders,
        coefficients: ident.result.coefficients.as_slice().to_vec(),
        sigma_min: ident.result.sigma_min,
        sigma_max: ident.result.sigma_max,
        n_samples: ident.result.n_samples,
        submodels: submodel_tuples(&factorization.submodels),
        s_star: ident.scan.as_ref().map(|s| s.s_star),
        below_threshold: ident.scan.as_ref().map(|s| s.below_threshold),
        curve: ident.scan.map(|s| s.curve).unwrap_or_default(),
        timings: [
            ("accumulate", t.accumulate),
            ("assemble", t.assemble),
            ("svd", t.svd),
            ("scan", t.scan),
            ("factor", t.factor),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect(),
    }
}

fn io_data<'a>(y: &'a [f64], u: &'a [f64], start: i64) -> PyResult<IoData<'a>> {
    if y.len() != u.len() {
        return Err(PyValueError::new_err("y and u must have the same length"));
    }
    Ok(IoData::aligned(y, u, start))
}

fn input_policy(kind: &str, params: Option<(f64, f64)>, std: f64) -> PyResult<InputPolicy> {
    Ok(match (kind, params) {
        ("gaussian", _) => InputPolicy::IidGaussian { std },
        ("uniform", p) => {
            let (lo, hi) = p.unwrap_or((-1.0, 1.0));
            InputPolicy::IidUniform { lo, hi }
        }
        ("binary", p) => {
            let (low, high) = p.unwrap_or((-1.0, 1.0));
            InputPolicy::PseudoRandomBinary { low, high }
        }
        _ => {
            return Err(PyValueError::new_err(format!(
                "unknown input policy '{kind}'"
            )))
        }
    })
}

/// Simulates a switched system given as `[(a, c), ..]`.
#[pyfunction]
#[pyo3(signature = (submodels, n, s2=0.0, seed=0, input="gaussian", input_range=None, input_std=1.0, dwell=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    submodels: Vec<PySubmodel>,
    n: usize,
    s2: f64,
    seed: u64,
    input: &str,
    input_range: Option<(f64, f64)>,
    input_std: f64,
    dwell: Option<usize>,
) -> PyResult<PyDataset> {
    if !(s2 >= 0.0) {
        return Err(PyValueError::new_err("s2 must be >= 0"));
    }
    let cfg = SimConfig {
        input: input_policy(input, input_range, input_std)?,
        switching: dwell.map_or(SwitchingPolicy::IidUniform, SwitchingPolicy::PeriodicDwell),
        ..SimConfig::new(
            submodel_set(submodels)?,
            NoiseSource::gaussian_variance(s2),
            n,
            seed,
        )
    };
    Ok(PyDataset {
        inner: simulator::simulate(&cfg).map_err(py_err)?,
    })
}

/// Sufficient statistics of aligned output/input series starting at `start`.
#[pyfunction]
#[pyo3(signature = (y, u, orders, start=0, threads=1))]
fn accumulate(
    y: Vec<f64>,
    u: Vec<f64>,
    orders: (usize, usize, usize),
    start: i64,
    threads: usize,
) -> PyResult<PyMomentStats> {
    let o = orders_of(orders)?;
    let inner = accumulate_stats(io_data(&y, &u, start)?, o, threads).map_err(py_err)?;
    Ok(PyMomentStats { inner })
}

/// Identifies coefficients and submodels. Give `s2` for known Gaussian noise
/// or `smax` to search the noise standard deviation on `[0, smax]`.
#[pyfunction]
#[pyo3(signature = (y, u, orders, s2=None, smax=None, start=0, grid=64, eps_rel=1e-3, threads=1, pool=CandidatePool::DEFAULT_CAPACITY))]
#[allow(clippy::too_many_arguments)]
fn identify(
    py: Python<'_>,
    y: Vec<f64>,
    u: Vec<f64>,
    orders: (usize, usize, usize),
    s2: Option<f64>,
    smax: Option<f64>,
    start: i64,
    grid: usize,
    eps_rel: f64,
    threads: usize,
    pool: usize,
) -> PyResult<PyIdentification> {
    let o = orders_of(orders)?;
    let spec = match (s2, smax) {
        (Some(v), None) if v >= 0.0 => NoiseSpec::Known(NoiseModel::gaussian_variance(v)),
        (None, Some(s_max)) => NoiseSpec::Scan {
            family: ScaleFamily::Gaussian,
            options: ScanOptions {
                grid_points: grid,
                epsilon_rel: eps_rel,
                ..ScanOptions::new(s_max)
            },
        },
        _ => return Err(PyValueError::new_err("give exactly one of s2 >= 0 or smax")),
    };
    let data = io_data(&y, &u, start)?;
    let report = py
        .detach(|| pipeline::run(data, o, &spec, threads.max(1), pool))
        .map_err(py_err)?;
    Ok(identification(
        o,
        report.identification,
        report.factorization,
    ))
}

/// Hybrid coefficient vector of a submodel set, leading entry one.
#[pyfunction]
fn hybrid_coefficients(submodels: Vec<PySubmodel>) -> PyResult<Vec<f64>> {
    let set = submodel_set(submodels)?;
    let basis = ExponentBasis::new(set.orders().map_err(py_err)?);
    Ok(set.hybrid_coefficients(&basis).map_err(py_err)?.into_vec())
}

/// Monomial labels of the embedding for `(n, na, nc)`.
#[pyfunction]
fn veronese_labels(orders: (usize, usize, usize)) -> PyResult<Vec<String>> {
    let basis = ExponentBasis::new(orders_of(orders)?);
    Ok((0..basis.len()).map(|i| basis.label(i)).collect())
}

/// Coefficients (lowest degree first) of the degree-`h` correction polynomial
/// for zero-mean Gaussian noise of standard deviation `std`.
#[pyfunction]
fn correction_polynomial(h: usize, std: f64) -> PyResult<Vec<f64>> {
    Ok(NoiseModel::gaussian(std)
        .correction_polynomial(h)
        .map_err(py_err)?
        .coeffs()
        .to_vec())
}

/// Zero-based mode and residual for each window of the series.
#[pyfunction]
#[pyo3(signature = (y, u, submodels, start=0))]
fn assign(
    y: Vec<f64>,
    u: Vec<f64>,
    submodels: Vec<PySubmodel>,
    start: i64,
) -> PyResult<Vec<(usize, f64)>> {
    let set = submodel_set(submodels)?;
    let o = set.orders().map_err(py_err)?;
    let normals = set.normals();
    let windows = io_data(&y, &u, start)?.windows(o).map_err(py_err)?;
    Ok(windows
        .map(|w| {
            let a = assign_regressor(&normals, w.regressor());
            (a.mode, a.residual)
        })
        .collect())
}

/// `max|eta| / max|y|`.
#[pyfunction]
fn noise_ratio(eta: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    simulator::noise_ratio(&eta, &y).map_err(py_err)
}

#[pymodule]
fn pysarid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyMomentStats>()?;
    m.add_class::<PyIdentification>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(accumulate, m)?)?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(veronese_labels, m)?)?;
    m.add_function(wrap_pyfunction!(correction_polynomial, m)?)?;
    m.add_function(wrap_pyfunction!(assign, m)?)?;
    m.add_function(wrap_pyfunction!(noise_ratio, m)?)?;
    Ok(())
}
