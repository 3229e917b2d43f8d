use dnode_core::data::WindowSet;
use dnode_core::decomposition::{decompose as decompose_window, DecompConfig};
use dnode_core::eda;
use dnode_core::harness::{run_on_panel, synth_generate as synth, ExperimentConfig, SynthSpec};
use dnode_core::instnorm::{self, NormAxis, NormState};
use dnode_core::metrics::evaluate_naive;
use dnode_core::node::{count_parameters, ModelParams, SolverConfig, SolverMethod};
use dnode_core::pipeline::{NormSettings, Pipeline, Variant};
use dnode_core::training::{self, TrainConfig};
use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Rows = Vec<Vec<f64>>;

fn err(e: dnode_core::Error) -> PyErr {
    match e {
        dnode_core::Error::Numerics(_) | dnode_core::Error::TrainingAborted { .. } | dnode_core::Error::Io { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_array(rows: &Rows) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let f = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != f) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, f), rows.concat()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(a: &Array2<f64>) -> Rows {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Splits a window (rows = time, columns = features) into trend, seasonality and residual.
#[pyfunction]
#[pyo3(signature = (x, kernel_size, period, extract_seasonality = true))]
fn decompose<'py>(
    py: Python<'py>,
    x: Rows,
    kernel_size: usize,
    period: usize,
    extract_seasonality: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let x = to_array(&x)?;
    let parts = decompose_window(x.view(), &DecompConfig::new(kernel_size, period, extract_seasonality)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("trend", to_rows(&parts.trend))?;
    out.set_item("seasonality", to_rows(&parts.seasonality))?;
    out.set_item("residual", to_rows(&parts.residual))?;
    Ok(out)
}

/// Instance normalization; returns `(normalized, mu, sigma)`.
#[pyfunction]
#[pyo3(signature = (x, axis = "feature", eps_floor = instnorm::DEFAULT_EPS_FLOOR))]
fn normalize(x: Rows, axis: &str, eps_floor: f64) -> PyResult<(Rows, Vec<f64>, Vec<f64>)> {
    let axis = match axis {
        "feature" => NormAxis::Feature,
        "time" => NormAxis::Time,
        other => return Err(PyValueError::new_err(format!("unknown axis {other:?}"))),
    };
    let x = to_array(&x)?;
    let (z, state) = instnorm::normalize_along(x.view(), axis, eps_floor);
    Ok((to_rows(&z), state.mu, state.sigma))
}

#[pyfunction]
#[pyo3(signature = (x, mu, sigma, axis = "feature"))]
fn denormalize(x: Rows, mu: Vec<f64>, sigma: Vec<f64>, axis: &str) -> PyResult<Rows> {
    let axis = match axis {
        "feature" => NormAxis::Feature,
        "time" => NormAxis::Time,
        other => return Err(PyValueError::new_err(format!("unknown axis {other:?}"))),
    };
    let x = to_array(&x)?;
    let out = instnorm::denormalize(x.view(), &NormState { axis, mu, sigma }).map_err(err)?;
    Ok(to_rows(&out))
}

#[pyfunction]
fn forecastability(series: Vec<f64>) -> PyResult<f64> {
    eda::forecastability(&series).map_err(err)
}

#[pyfunction]
fn trend_slope(series: Vec<f64>) -> PyResult<f64> {
    eda::trend_slope(&series).map_err(err)
}

/// Augmented Dickey-Fuller test with a constant; returns `(statistic, p_value, lags, nobs)`.
#[pyfunction]
#[pyo3(signature = (series, lags = None))]
fn adf_test(series: Vec<f64>, lags: Option<usize>) -> PyResult<(f64, f64, usize, usize)> {
    let r = eda::adf_test(&series, lags).map_err(err)?;
    Ok((r.statistic, r.p_value, r.lags, r.nobs))
}

/// Synthetic panel values (rows = time).
#[pyfunction]
#[pyo3(signature = (length = 2000, n_features = 3, amplitude = 1.0, period = 24.0, trend_slope = 0.0, noise_std = 0.1, level_shift = 0.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn synth_generate(
    length: usize,
    n_features: usize,
    amplitude: f64,
    period: f64,
    trend_slope: f64,
    noise_std: f64,
    level_shift: f64,
    seed: u64,
) -> PyResult<Rows> {
    let spec = SynthSpec {
        length,
        n_features,
        amplitude,
        period,
        trend_slope,
        noise_std,
        level_shift,
        seed,
        ..Default::default()
    };
    Ok(to_rows(&synth(&spec).map_err(err)?.values))
}

/// Runs a TOML experiment config against a synthetic panel and returns the report.
#[pyfunction]
#[pyo3(signature = (config_toml, values))]
fn run_synthetic<'py>(py: Python<'py>, config_toml: &str, values: Rows) -> PyResult<Bound<'py, PyAny>> {
    let config = ExperimentConfig::from_toml_str(config_toml).map_err(err)?;
    let values = to_array(&values)?;
    let spec = SynthSpec {
        length: values.nrows(),
        n_features: values.ncols(),
        amplitude: 0.0,
        noise_std: 0.0,
        ..Default::default()
    };
    let mut panel = synth(&spec).map_err(err)?;
    panel.values = values;
    let outcome = run_on_panel(&config, panel).map_err(err)?;
    json_to_py(py, &outcome.report.to_json().map_err(err)?)
}

/// A forecasting pipeline together with its parameters.
#[pyclass]
struct Model {
    pipeline: Pipeline,
    params: ModelParams,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (variant, seq_len, pred_len, kernel_size = 25, period = 24, use_seasonality = true, instance_norm = false, solver = "euler", n_steps = 2, seed = 2021))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        variant: &str,
        seq_len: usize,
        pred_len: usize,
        kernel_size: usize,
        period: usize,
        use_seasonality: bool,
        instance_norm: bool,
        solver: &str,
        n_steps: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let variant: Variant = variant.parse().map_err(err)?;
        let method: SolverMethod = solver.parse().map_err(err)?;
        let decomposition = variant.decomposes().then(|| {
            DecompConfig::new(kernel_size, period, variant.forced_seasonality().unwrap_or(use_seasonality))
        });
        let normalization = (instance_norm && variant.may_normalize()).then(NormSettings::default);
        let pipeline = Pipeline::new(
            variant,
            seq_len,
            pred_len,
            decomposition,
            normalization,
            SolverConfig::new(method, n_steps),
        )
        .map_err(err)?;
        let params = pipeline.init_model(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { pipeline, params })
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        count_parameters(&self.params)
    }

    /// The ordered processing blocks as JSON-compatible dicts.
    fn blocks<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let text = serde_json::to_string(&self.pipeline.blocks()).map_err(|e| PyValueError::new_err(e.to_string()))?;
        json_to_py(py, &text)
    }

    fn predict(&self, x: Rows) -> PyResult<Rows> {
        let x = to_array(&x)?;
        Ok(to_rows(&self.pipeline.predict(&self.params, x.view()).map_err(err)?))
    }

    /// Trains on sliding windows of `train` with early stopping on `val`.
    #[pyo3(signature = (train, val, learning_rate = 0.005, batch_size = 32, max_epochs = 100, patience = 10, lambda_k = 0.0, lambda_j = 0.0, seed = 2021))]
    #[allow(clippy::too_many_arguments)]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        train: Rows,
        val: Rows,
        learning_rate: f64,
        batch_size: usize,
        max_epochs: usize,
        patience: usize,
        lambda_k: f64,
        lambda_j: f64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let (l, h) = (self.pipeline.seq_len, self.pipeline.pred_len);
        let train_w = WindowSet::new(to_array(&train)?, l, h).map_err(err)?;
        let val_w = WindowSet::new(to_array(&val)?, l, h).map_err(err)?;
        let solver = match self.pipeline.flow {
            dnode_core::pipeline::Flow::Node { solver } => solver,
            _ => SolverConfig::default(),
        };
        let config = TrainConfig {
            learning_rate,
            batch_size,
            max_epochs,
            patience,
            lambda_k,
            lambda_j,
            solver,
            seed,
        };
        let (params, mut report) =
            training::train(&self.pipeline, &train_w, &val_w, self.params.clone(), &config).map_err(err)?;
        self.params = params;
        report.wall_clock_seconds = None;
        let text = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
        json_to_py(py, &text)
    }

    /// Test metrics over all windows of `values`, with the naive baseline.
    fn evaluate<'py>(&self, py: Python<'py>, values: Rows) -> PyResult<Bound<'py, PyDict>> {
        let w = WindowSet::new(to_array(&values)?, self.pipeline.seq_len, self.pipeline.pred_len).map_err(err)?;
        let r = training::evaluate(&self.pipeline, &self.params, &w, 256).map_err(err)?;
        let naive = evaluate_naive(&w).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("mse", r.mse)?;
        out.set_item("mae", r.mae)?;
        out.set_item("mape_paper", r.mape_paper)?;
        out.set_item("n_windows", r.n_windows)?;
        out.set_item("naive_mse", naive.mse)?;
        Ok(out)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.params.save(path).map_err(err)
    }

    /// Replaces the parameters with a checkpoint written by `save`.
    fn load(&mut self, path: &str) -> PyResult<()> {
        let params = ModelParams::load(path).map_err(err)?;
        self.pipeline.check_model(&params).map_err(err)?;
        self.params = params;
        Ok(())
    }
}

#[pymodule]
fn dnode(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(denormalize, m)?)?;
    m.add_function(wrap_pyfunction!(forecastability, m)?)?;
    m.add_function(wrap_pyfunction!(trend_slope, m)?)?;
    m.add_function(wrap_pyfunction!(adf_test, m)?)?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_synthetic, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
