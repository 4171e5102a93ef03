//! Python bindings. Points are lists of rows (or a flat list for
//! one-dimensional data); reports and configs cross the boundary as dicts.

use drpu_core::baselines::{train_baseline as core_train_baseline, PuMethod, PuRiskObjective, SurrogateLoss};
use drpu_core::classifier::{cost_threshold as core_cost_threshold, ShiftSpec};
use drpu_core::data::{Points, SyntheticCase};
use drpu_core::experiments::{boundary_experiment as core_boundary_experiment, BoundaryConfig};
use drpu_core::models::RatioModel;
use drpu_core::prior::{self, IntervalsMetadata, ThresholdIntervals};
use drpu_core::trainer::{self, TrainConfig};
use drpu_core::{metrics, theory, BregmanGenerator, Error, PUDataset};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(drpu, DrpuError, PyException, "Training, data or estimation failure.");

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument { .. }
        | Error::DimensionMismatch { .. }
        | Error::Empty(_)
        | Error::NegativeRatio { .. }
        | Error::NotStronglyConvex(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        other => DrpuError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| DrpuError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn from_py<T: DeserializeOwned + Default>(py: Python<'_>, obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    let Some(obj) = obj else {
        return Ok(T::default());
    };
    let s: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&s).map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))
}

fn points(obj: &Bound<'_, PyAny>) -> PyResult<Points> {
    if let Ok(rows) = obj.extract::<Vec<Vec<f64>>>() {
        return Points::from_rows(&rows).map_err(err);
    }
    let xs: Vec<f64> = obj.extract()?;
    Ok(Points::from_scalars(&xs))
}

fn rows(p: &Points) -> Vec<Vec<f64>> {
    p.rows().map(<[f64]>::to_vec).collect()
}

#[pyclass(name = "BregmanGenerator", module = "drpu", frozen, from_py_object)]
#[derive(Clone)]
struct PyGenerator {
    inner: BregmanGenerator,
}

#[pymethods]
impl PyGenerator {
    /// `f(t) = t²/2`.
    #[staticmethod]
    fn lsif() -> Self {
        Self {
            inner: BregmanGenerator::lsif(),
        }
    }

    /// `f(t) = μ t²/2`.
    #[staticmethod]
    fn quadratic(mu: f64) -> PyResult<Self> {
        Ok(Self {
            inner: BregmanGenerator::scaled_quadratic(mu).map_err(err)?,
        })
    }

    #[staticmethod]
    fn exp() -> Self {
        Self {
            inner: BregmanGenerator::exp(),
        }
    }

    fn f(&self, t: f64) -> f64 {
        self.inner.f(t)
    }

    fn f_prime(&self, t: f64) -> f64 {
        self.inner.f_prime(t)
    }

    fn f_conj(&self, t: f64) -> f64 {
        self.inner.f_conj(t)
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    fn __repr__(&self) -> String {
        format!("BregmanGenerator(mu={})", self.inner.mu())
    }
}

#[pyclass(name = "RatioModel", module = "drpu")]
struct PyModel {
    inner: RatioModel,
}

#[pymethods]
impl PyModel {
    /// Linear model on Gaussian kernels centred at `centers`.
    #[staticmethod]
    fn gaussian_basis(centers: &Bound<'_, PyAny>, bandwidth: f64) -> PyResult<Self> {
        Ok(Self {
            inner: RatioModel::gaussian_basis_linear(points(centers)?, bandwidth).map_err(err)?,
        })
    }

    /// ReLU network with the given layer sizes, input first and 1 last.
    #[staticmethod]
    fn mlp(layers: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: RatioModel::mlp(&layers, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: RatioModel::load(path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: RatioModel::from_json(text).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn predict(&self, x: &Bound<'_, PyAny>) -> PyResult<Vec<f64>> {
        self.inner.predict_all(&points(x)?).map_err(err)
    }

    #[getter]
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.params().len()
    }
}

#[pyclass(name = "ThresholdIntervals", module = "drpu")]
struct PyIntervals {
    inner: ThresholdIntervals,
    metadata: Option<IntervalsMetadata>,
}

#[pymethods]
impl PyIntervals {
    /// Interval list of positive-sample ratio values.
    #[staticmethod]
    fn from_scores(r_pos: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: prior::build_intervals(&r_pos).map_err(err)?,
            metadata: None,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (inner, metadata) = ThresholdIntervals::load(path).map_err(err)?;
        Ok(Self { inner, metadata })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let (inner, metadata) = ThresholdIntervals::from_json(text).map_err(err)?;
        Ok(Self { inner, metadata })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json(self.metadata.as_ref()).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path, self.metadata.as_ref()).map_err(err)
    }

    /// Fraction of positives with `r ≥ theta`.
    fn reconstruct(&self, theta: f64) -> f64 {
        self.inner.reconstruct(theta)
    }

    #[getter]
    fn n_pos(&self) -> usize {
        self.inner.n_pos()
    }

    /// Training prior and γ stored with the list, if any.
    #[getter]
    fn metadata<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.metadata)
    }
}

fn case(index: u8) -> PyResult<SyntheticCase> {
    SyntheticCase::from_index(index).map_err(err)
}

/// PU sample of synthetic case 1 or 2: `{"positives": rows, "unlabeled": rows, "hidden_labels": [...]}`.
#[pyfunction]
#[pyo3(signature = (case_index, n_pos, n_unl, prior, seed=0))]
fn synth<'py>(py: Python<'py>, case_index: u8, n_pos: usize, n_unl: usize, prior: f64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let d = case(case_index)?.spec(prior).map_err(err)?.sample_pu(n_pos, n_unl, seed).map_err(err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("positives", rows(&d.positives))?;
    dict.set_item("unlabeled", rows(&d.unlabeled))?;
    dict.set_item("hidden_labels", d.hidden_labels)?;
    Ok(dict.into_any())
}

/// Labeled sample `(rows, labels)` of a synthetic case at the given prior.
#[pyfunction]
#[pyo3(signature = (case_index, prior, n, seed=0))]
fn sample_labeled(case_index: u8, prior: f64, n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<i8>)> {
    let pool = case(case_index)?.spec(prior).map_err(err)?.sample_labeled(n, seed).map_err(err)?;
    Ok((rows(&pool.points), pool.labels))
}

fn pu(pos: &Bound<'_, PyAny>, unl: &Bound<'_, PyAny>) -> PyResult<PUDataset> {
    PUDataset::new(points(pos)?, points(unl)?, None).map_err(err)
}

/// Trains a density-ratio model; returns `(model, report)`. `config` holds
/// any training settings to change from their defaults.
#[pyfunction]
#[pyo3(signature = (model, train_pos, train_unl, val_pos, val_unl, generator=None, config=None))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    model: &PyModel,
    train_pos: &Bound<'py, PyAny>,
    train_unl: &Bound<'py, PyAny>,
    val_pos: &Bound<'py, PyAny>,
    val_unl: &Bound<'py, PyAny>,
    generator: Option<PyGenerator>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(PyModel, Bound<'py, PyAny>)> {
    let cfg: TrainConfig = from_py(py, config)?;
    let gen = generator.map_or_else(BregmanGenerator::lsif, |g| g.inner);
    let (m, report) = trainer::train(model.inner.clone(), &pu(train_pos, train_unl)?, &pu(val_pos, val_unl)?, &gen, &cfg).map_err(err)?;
    Ok((PyModel { inner: m }, to_py(py, &report)?))
}

/// Trains a uPU or nnPU decision function; predict `+1` iff output ≥ 0.
#[pyfunction]
#[pyo3(signature = (method, model, train_pos, train_unl, val_pos, val_unl, prior, loss="logistic", config=None))]
#[allow(clippy::too_many_arguments)]
fn train_baseline<'py>(
    py: Python<'py>,
    method: &str,
    model: &PyModel,
    train_pos: &Bound<'py, PyAny>,
    train_unl: &Bound<'py, PyAny>,
    val_pos: &Bound<'py, PyAny>,
    val_unl: &Bound<'py, PyAny>,
    prior: f64,
    loss: &str,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(PyModel, Bound<'py, PyAny>)> {
    let cfg: TrainConfig = from_py(py, config)?;
    let objective = PuRiskObjective {
        method: method.parse::<PuMethod>().map_err(err)?,
        loss: loss.parse::<SurrogateLoss>().map_err(err)?,
        prior,
    };
    let (m, report) = core_train_baseline(&objective, model.inner.clone(), &pu(train_pos, train_unl)?, &pu(val_pos, val_unl)?, &cfg, None).map_err(err)?;
    Ok((PyModel { inner: m }, to_py(py, &report)?))
}

#[pyfunction]
fn estimate_prior<'py>(py: Python<'py>, r_pos: Vec<f64>, r_unl: Vec<f64>, gamma: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &prior::estimate_prior(&r_pos, &r_unl, gamma).map_err(err)?)
}

#[pyfunction]
fn estimate_test_prior<'py>(py: Python<'py>, intervals: &PyIntervals, r_test: Vec<f64>, gamma: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &prior::estimate_test_prior(&intervals.inner, &r_test, gamma).map_err(err)?)
}

/// `(c0, theta)`: predict `+1` iff `r(x) ≥ theta`.
#[pyfunction]
fn cost_threshold(train_prior: f64, test_prior: f64, cost: f64) -> PyResult<(f64, f64)> {
    core_cost_threshold(&ShiftSpec::new(train_prior, test_prior, cost).map_err(err)?).map_err(err)
}

#[pyfunction]
fn auc(scores_pos: Vec<f64>, scores_neg: Vec<f64>) -> PyResult<f64> {
    metrics::auc(&scores_pos, &scores_neg).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (seed=0, trials=100, inject_violation=false))]
fn verify_theory(py: Python<'_>, seed: u64, trials: usize, inject_violation: bool) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &theory::run(seed, trials, inject_violation).map_err(err)?)
}

/// Boundary experiment over `seeds`; `config` overrides defaults field by field.
#[pyfunction]
#[pyo3(signature = (seeds, config=None))]
fn boundary_experiment<'py>(py: Python<'py>, seeds: Vec<u64>, config: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: BoundaryConfig = from_py(py, config)?;
    to_py(py, &core_boundary_experiment(&cfg, &seeds).map_err(err)?)
}

#[pymodule]
fn drpu(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DrpuError", m.py().get_type::<DrpuError>())?;
    m.add_class::<PyGenerator>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyIntervals>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(sample_labeled, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(train_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_prior, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_test_prior, m)?)?;
    m.add_function(wrap_pyfunction!(cost_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(verify_theory, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_experiment, m)?)?;
    Ok(())
}
