//! Python bindings: `import wmc_drought`.
//!
//! Class sequences are passed as lists of labels (`"ED"` … `"EW"`) with
//! `None` for missing months.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use wmc_core::{
    ClassSequence, ClassificationScheme, ContingencyTable, DroughtClass, FitConfig, Grouping,
    LagSelection, LagWeightProfile, Matrix, Method, ModelConfig, RawSeries, TransitionOptions,
    WeightBasis, WmcError, YearMonth,
};

fn to_py(e: WmcError) -> PyErr {
    match e {
        WmcError::NoUniqueStationary(_) | WmcError::NoForecast | WmcError::NoViableModel => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn basis(name: &str) -> PyResult<WeightBasis> {
    name.parse().map_err(to_py)
}

fn sequence(states: Vec<Option<String>>) -> PyResult<ClassSequence> {
    let classes = states
        .iter()
        .map(|s| s.as_deref().map(str::parse::<DroughtClass>).transpose())
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    Ok(ClassSequence::from_classes(&classes))
}

fn labels(states: &[Option<usize>]) -> Vec<Option<&'static str>> {
    states
        .iter()
        .map(|s| {
            s.and_then(DroughtClass::from_index)
                .map(DroughtClass::label)
        })
        .collect()
}

/// Drought class label of one index value.
#[pyfunction]
fn classify(value: f64) -> PyResult<&'static str> {
    wmc_core::classify(value)
        .map(DroughtClass::label)
        .map_err(to_py)
}

/// Class labels of an index series; `None` stays `None`.
#[pyfunction]
fn classify_series(values: Vec<Option<f64>>) -> PyResult<Vec<Option<&'static str>>> {
    let scheme = ClassificationScheme::default();
    values
        .into_iter()
        .map(|v| {
            v.map(|x| scheme.classify(x).map(|i| DroughtClass::ALL[i].label()))
                .transpose()
        })
        .collect::<Result<_, _>>()
        .map_err(to_py)
}

/// Quadratic-weighted kappa of a square count table.
#[pyfunction]
fn weighted_kappa<'py>(py: Python<'py>, counts: Vec<Vec<u64>>) -> PyResult<Bound<'py, PyDict>> {
    let table = ContingencyTable::from_counts(&counts).map_err(to_py)?;
    let stat = wmc_core::weighted_kappa(&table);
    let out = PyDict::new(py);
    out.set_item("kappa", stat.kappa)?;
    out.set_item("standard_error", stat.standard_error)?;
    out.set_item("z_stat", stat.z_stat)?;
    out.set_item("p_value", stat.p_value)?;
    Ok(out)
}

/// Normalize per-lag kappa (or z) values into lag weights.
#[pyfunction]
#[pyo3(signature = (values, basis_name = "kappa"))]
fn normalize_weights(values: Vec<Option<f64>>, basis_name: &str) -> PyResult<Vec<f64>> {
    Ok(
        LagWeightProfile::from_basis_values(basis(basis_name)?, &values)
            .map_err(to_py)?
            .weights(),
    )
}

/// Per-lag kappa, z, p-value and weight of a class sequence.
#[pyfunction]
#[pyo3(signature = (states, max_lag = 7, basis_name = "kappa"))]
fn weight_profile<'py>(
    py: Python<'py>,
    states: Vec<Option<String>>,
    max_lag: usize,
    basis_name: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let profile =
        wmc_core::weight_profile(&sequence(states)?, max_lag, basis(basis_name)?).map_err(to_py)?;
    profile
        .records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("lag", r.lag)?;
            d.set_item("pairs", r.pair_count)?;
            d.set_item("kappa", r.kappa)?;
            d.set_item("z_stat", r.z_stat)?;
            d.set_item("p_value", r.p_value)?;
            d.set_item("weight", r.weight)?;
            Ok(d)
        })
        .collect()
}

/// Lag-1..max_lag transition matrices; unsupported rows are all zero.
#[pyfunction]
#[pyo3(signature = (states, max_lag = 7))]
fn estimate_transitions(states: Vec<Option<String>>, max_lag: usize) -> PyResult<Vec<Matrix>> {
    let set = wmc_core::estimate_transitions(&sequence(states)?, max_lag).map_err(to_py)?;
    Ok(set.lags.into_iter().map(|l| l.probabilities).collect())
}

/// Stationary distribution of a one-step transition matrix.
#[pyfunction]
fn stationary(matrix: Matrix) -> PyResult<Vec<f64>> {
    Ok(wmc_core::stationary(&matrix).map_err(to_py)?.probabilities)
}

/// Standardize a monthly series into index values.
#[pyfunction]
#[pyo3(signature = (values, start = "2000-01", pooled = false))]
fn standardize(values: Vec<Option<f64>>, start: &str, pooled: bool) -> PyResult<Vec<Option<f64>>> {
    let start: YearMonth = start.parse().map_err(to_py)?;
    let raw = RawSeries::new("", start, "", values).map_err(to_py)?;
    let grouping = if pooled {
        Grouping::Pooled
    } else {
        Grouping::PerCalendarMonth
    };
    let out = wmc_core::standardize(&raw, grouping, &FitConfig::default()).map_err(to_py)?;
    Ok(out.index.values().to_vec())
}

fn model_config(max_lag: usize, basis_name: &str, smoothing: f64) -> PyResult<ModelConfig> {
    Ok(ModelConfig {
        lags: LagSelection::Fixed(max_lag),
        basis: basis(basis_name)?,
        transitions: TransitionOptions {
            smoothing,
            ..TransitionOptions::default()
        },
    })
}

/// Rolling-origin backtest against lag-1 Markov and climatology baselines.
#[pyfunction]
#[pyo3(signature = (states, max_lag = 7, holdout = 12, basis_name = "kappa"))]
fn backtest<'py>(
    py: Python<'py>,
    states: Vec<Option<String>>,
    max_lag: usize,
    holdout: usize,
    basis_name: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = wmc_core::BacktestConfig {
        model: model_config(max_lag, basis_name, 0.0)?,
        holdout,
        ..Default::default()
    };
    let report = wmc_core::backtest(&sequence(states)?, &cfg).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("hit_rate", report.hit_rate)?;
    out.set_item("confusion", report.confusion.clone())?;
    out.set_item("skipped_folds", report.skipped_folds)?;
    let scores = PyDict::new(py);
    for m in Method::ALL {
        scores.set_item(m.name(), report.score(m).hit_rate)?;
    }
    out.set_item("scores", scores)?;
    Ok(out)
}

/// A fitted weighted Markov chain.
#[pyclass(name = "WmcModel", module = "wmc_drought")]
struct PyWmcModel {
    inner: wmc_core::WmcModel,
}

#[pymethods]
impl PyWmcModel {
    #[staticmethod]
    #[pyo3(signature = (states, max_lag = 7, basis_name = "kappa", smoothing = 0.0))]
    fn fit(
        states: Vec<Option<String>>,
        max_lag: usize,
        basis_name: &str,
        smoothing: f64,
    ) -> PyResult<Self> {
        let seq = sequence(states)?;
        let inner = wmc_core::WmcModel::fit(&seq, &model_config(max_lag, basis_name, smoothing)?)
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn max_lag(&self) -> usize {
        self.inner.max_lag()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.weights()
    }

    #[getter]
    fn matrices(&self) -> Vec<Matrix> {
        self.inner
            .matrices
            .lags
            .iter()
            .map(|l| l.probabilities.clone())
            .collect()
    }

    /// Forecasts for the next `horizon` months after `history`.
    #[pyo3(signature = (history, horizon = 1))]
    fn predict<'py>(
        &self,
        py: Python<'py>,
        history: Vec<Option<String>>,
        horizon: usize,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let seq = sequence(history)?;
        let forecasts = self
            .inner
            .predict_iterated(seq.states(), horizon, Default::default())
            .map_err(to_py)?;
        forecasts
            .iter()
            .map(|f| {
                let d = PyDict::new(py);
                let predicted = labels(&[Some(f.distribution.predicted_class)])[0];
                d.set_item("predicted", predicted)?;
                d.set_item("probabilities", f.distribution.probabilities.clone())?;
                d.set_item("used_lags", f.distribution.used_lags.clone())?;
                d.set_item("renormalized", f.distribution.renormalized)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("WmcModel(max_lag={})", self.inner.max_lag())
    }
}

#[pymodule]
fn wmc_drought(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CLASSES", DroughtClass::labels())?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(classify_series, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_weights, m)?)?;
    m.add_function(wrap_pyfunction!(weight_profile, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_transitions, m)?)?;
    m.add_function(wrap_pyfunction!(stationary, m)?)?;
    m.add_function(wrap_pyfunction!(standardize, m)?)?;
    m.add_function(wrap_pyfunction!(backtest, m)?)?;
    m.add_class::<PyWmcModel>()?;
    Ok(())
}
