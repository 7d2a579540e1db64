//! Python module `cruc`: datasets, the synthetic model, estimators and scoring.

use cruc_core::data::{self, SplitSpec};
use cruc_core::estimators::{EmEstimate, EstimateSet};
use cruc_core::eval::{self, Method, MethodParams};
use cruc_core::synth::{self, GroundTruth, SyntheticSpec};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(cruc, CrucError, PyException);

fn py_err(e: cruc_core::Error) -> PyErr {
    CrucError::new_err(format!("{}: {e}", e.code()))
}

trait OrPyErr<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPyErr<T> for cruc_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Experiments with per-trial predictor rows and responses.
#[pyclass(name = "Dataset", module = "cruc", skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: data::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Build from a list of `(id, rows, responses)` tuples.
    #[new]
    fn new(experiments: Vec<(String, Vec<Vec<f64>>, Vec<f64>)>) -> PyResult<Self> {
        let experiments = experiments
            .iter()
            .map(|(id, rows, y)| data::Experiment::from_rows(id.clone(), rows, y))
            .collect::<cruc_core::Result<Vec<_>>>()
            .py()?;
        Ok(Self {
            inner: data::Dataset::new(experiments).py()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, dim=None))]
    fn from_letor(text: &str, dim: Option<usize>) -> PyResult<Self> {
        let dim = match dim {
            Some(d) => d,
            None => data::infer_letor_dim(text).py()?,
        };
        Ok(Self {
            inner: data::parse_letor(text, dim).py()?,
        })
    }

    fn to_letor(&self) -> PyResult<String> {
        data::to_letor(&self.inner).py()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(rows, responses)` of one experiment.
    fn experiment(&self, index: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        if index >= self.inner.len() {
            return Err(pyo3::exceptions::PyIndexError::new_err(index));
        }
        let e = self.inner.experiment(index);
        let rows = e
            .predictors()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        Ok((rows, e.responses().iter().copied().collect()))
    }

    /// Per-experiment random train/test split of the trials.
    #[pyo3(signature = (train_fraction=0.7, seed=0))]
    fn split(&self, train_fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (train, test) =
            data::train_test_split(&self.inner, &SplitSpec::new(train_fraction, seed).py()?)
                .py()?;
        Ok((Self { inner: train }, Self { inner: test }))
    }

    /// Gaussian random projection of the predictors to `target_dim` features.
    #[pyo3(signature = (target_dim, seed=0))]
    fn project(&self, target_dim: usize, seed: u64) -> PyResult<Self> {
        let sketch = data::make_projection(self.inner.dim(), target_dim, seed).py()?;
        Ok(Self {
            inner: data::apply_projection(&self.inner, &sketch).py()?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(experiments={}, trials={}, dim={})",
            self.inner.len(),
            self.inner.total_trials(),
            self.inner.dim()
        )
    }
}

/// One regression vector per experiment.
#[pyclass(name = "Estimates", module = "cruc", skip_from_py_object)]
#[derive(Clone)]
pub struct PyEstimates {
    inner: EstimateSet,
    params: String,
}

#[pymethods]
impl PyEstimates {
    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    /// Vectors as a list of columns, one per experiment.
    #[getter]
    fn vectors(&self) -> Vec<Vec<f64>> {
        self.inner
            .matrix()
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect()
    }

    /// Hyperparameters used by the fit, as JSON.
    #[getter]
    fn params(&self) -> String {
        self.params.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Estimates(experiments={}, dim={}, params={})",
            self.inner.len(),
            self.inner.dim(),
            self.params
        )
    }
}

/// Ground truth of a synthetic draw.
#[pyclass(name = "GroundTruth", module = "cruc", skip_from_py_object)]
#[derive(Clone)]
pub struct PyGroundTruth {
    inner: GroundTruth,
}

#[pymethods]
impl PyGroundTruth {
    #[getter]
    fn cluster_vectors(&self) -> Vec<Vec<f64>> {
        self.inner
            .cluster_vectors
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect()
    }

    #[getter]
    fn assignments(&self) -> Vec<usize> {
        self.inner.assignments.clone()
    }

    fn estimates(&self) -> PyEstimates {
        PyEstimates {
            inner: self.inner.per_experiment_vectors.clone(),
            params: "{}".into(),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }
}

/// Draw `experiments` experiments from the Gaussian cluster model.
#[pyfunction]
#[pyo3(signature = (experiments=100, trials=70, dim=6, clusters=5, sigma=0.1, seed=0))]
fn generate(
    experiments: usize,
    trials: usize,
    dim: usize,
    clusters: usize,
    sigma: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyGroundTruth)> {
    let spec = SyntheticSpec {
        num_experiments: experiments,
        trials_per_experiment: trials,
        dim,
        num_clusters: clusters,
        noise_std: sigma,
        seed,
    };
    let (inner, truth) = synth::generate(&spec).py()?;
    Ok((PyDataset { inner }, PyGroundTruth { inner: truth }))
}

#[allow(clippy::too_many_arguments)]
fn params(
    k: Option<usize>,
    t: Option<usize>,
    seed: u64,
    mixture: bool,
    epsilon: Option<f64>,
    tau: Option<f64>,
    step: Option<f64>,
    max_iter: Option<usize>,
) -> MethodParams {
    MethodParams {
        k,
        t,
        seed,
        em_estimate: if mixture {
            EmEstimate::Mixture
        } else {
            EmEstimate::Map
        },
        epsilon,
        epsilon_factor: None,
        tau,
        step,
        max_iter,
    }
}

fn method(name: &str) -> PyResult<Method> {
    name.parse().py()
}

/// Fit one method (`ir`, `cr`, `em`, `km`, `svt`, `cw`, `lor`).
#[pyfunction]
#[pyo3(signature = (method_name, train, k=None, t=None, seed=0, mixture=false, epsilon=None, tau=None, step=None, max_iter=None))]
#[allow(clippy::too_many_arguments)]
fn fit(
    method_name: &str,
    train: &PyDataset,
    k: Option<usize>,
    t: Option<usize>,
    seed: u64,
    mixture: bool,
    epsilon: Option<f64>,
    tau: Option<f64>,
    step: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<PyEstimates> {
    let p = params(k, t, seed, mixture, epsilon, tau, step, max_iter);
    let fit = eval::fit_method(method(method_name)?, &train.inner, &p).py()?;
    Ok(PyEstimates {
        inner: fit.estimates,
        params: serde_json::to_string(&fit.params).expect("params serialize"),
    })
}

/// Fit on `train`, score on `test`; returns a dict with mse and classification_error.
#[pyfunction]
#[pyo3(signature = (method_name, train, test, k=None, t=None, seed=0, mixture=false, epsilon=None, tau=None, step=None, max_iter=None))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    method_name: &str,
    train: &PyDataset,
    test: &PyDataset,
    k: Option<usize>,
    t: Option<usize>,
    seed: u64,
    mixture: bool,
    epsilon: Option<f64>,
    tau: Option<f64>,
    step: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let p = params(k, t, seed, mixture, epsilon, tau, step, max_iter);
    let (_, report) = eval::evaluate(method(method_name)?, &train.inner, &test.inner, &p).py()?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("method", report.method.as_str())?;
    out.set_item("params", report.params_string())?;
    out.set_item("mse", report.mse)?;
    out.set_item("classification_error", report.classification_error)?;
    Ok(out)
}

#[pyfunction]
fn test_mse(estimates: &PyEstimates, test: &PyDataset) -> PyResult<f64> {
    eval::test_mse(&estimates.inner, &test.inner).py()
}

#[pyfunction]
fn classification_error(estimates: &PyEstimates, test: &PyDataset) -> PyResult<f64> {
    eval::classification_error(&estimates.inner, &test.inner).py()
}

#[pyfunction]
fn parameter_mse(estimates: &PyEstimates, truth: &PyGroundTruth) -> PyResult<f64> {
    synth::parameter_mse(&estimates.inner, &truth.inner).py()
}

/// High-SNR parameter error `σ²d/(TN)` of local regression.
#[pyfunction]
fn asymptotic_mse(sigma: f64, d: usize, t: usize, n: usize) -> PyResult<f64> {
    synth::asymptotic_mse(sigma, d, t, n).py()
}

#[pymodule]
fn cruc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CrucError", m.py().get_type::<CrucError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyEstimates>()?;
    m.add_class::<PyGroundTruth>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(test_mse, m)?)?;
    m.add_function(wrap_pyfunction!(classification_error, m)?)?;
    m.add_function(wrap_pyfunction!(parameter_mse, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_mse, m)?)?;
    Ok(())
}
