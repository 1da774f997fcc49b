//! Python bindings. Heavy calls release the GIL.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gcpv::bench::{
    benchmark_dataset, forecast_series, run_historical, Backend, ForecastTask, MseReport,
    SigmaSummary, Trained, Windowing, DEFAULT_DRAWS,
};
use gcpv::data::{self, CsvFormat};
use gcpv::garch::{self, GarchParams};
use gcpv::mcmc::SamplerOptions;
use gcpv::train::{
    initial_hypers, optimize, ModelConfig, ModelKind, OptimizeOptions, TrainedModel,
};

fn err(e: gcpv::Error) -> PyErr {
    match e {
        gcpv::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        gcpv::Error::Parse { .. }
        | gcpv::Error::NonPositivePrice { .. }
        | gcpv::Error::LengthMismatch { .. }
        | gcpv::Error::InvalidParameter(_)
        | gcpv::Error::WindowTooLarge { .. }
        | gcpv::Error::DegenerateData(_)
        | gcpv::Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn value_err(msg: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(msg.to_string())
}

/// An observed return series with optional known volatility.
#[pyclass(name = "TimeSeries", module = "gcpv", frozen)]
pub struct PyTimeSeries {
    inner: data::TimeSeries,
}

#[pymethods]
impl PyTimeSeries {
    #[new]
    #[pyo3(signature = (times, values, true_sigma=None, name="series".to_string()))]
    fn new(
        times: Vec<f64>,
        values: Vec<f64>,
        true_sigma: Option<Vec<f64>>,
        name: String,
    ) -> PyResult<Self> {
        let mut ts = data::TimeSeries::new(name, times, values).map_err(err)?;
        if let Some(s) = true_sigma {
            ts = ts.with_true_sigma(s).map_err(err)?;
        }
        Ok(PyTimeSeries { inner: ts })
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn true_sigma(&self) -> Option<Vec<f64>> {
        self.inner.true_sigma.clone()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    /// `true_sigma**2` when known, else the squared observations.
    fn reference_variance(&self) -> Vec<f64> {
        self.inner.reference_variance()
    }

    fn to_csv(&self, path: PathBuf) -> PyResult<()> {
        let f = std::fs::File::create(&path)
            .map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        self.inner.write_csv(f).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TimeSeries(name={:?}, n={})",
            self.inner.name,
            self.inner.len()
        )
    }
}

#[pyfunction]
fn simulate_trig(seed: u64) -> PyTimeSeries {
    PyTimeSeries {
        inner: data::simulate_trig(seed),
    }
}

#[pyfunction]
fn simulate_jump(seed: u64) -> PyTimeSeries {
    PyTimeSeries {
        inner: data::simulate_jump(seed),
    }
}

#[pyfunction]
#[pyo3(signature = (seed, omega, alpha, beta, n))]
fn simulate_garch(
    seed: u64,
    omega: f64,
    alpha: f64,
    beta: f64,
    n: usize,
) -> PyResult<PyTimeSeries> {
    let p = GarchParams::new(omega, alpha, beta).map_err(err)?;
    Ok(PyTimeSeries {
        inner: data::simulate_garch(seed, &p, n),
    })
}

/// Reads `date,price`, `date,return` or `t,y[,true_sigma]` CSV.
#[pyfunction]
#[pyo3(signature = (path, format="auto"))]
fn load_returns(path: PathBuf, format: &str) -> PyResult<PyTimeSeries> {
    let format: CsvFormat = format.parse().map_err(value_err)?;
    Ok(PyTimeSeries {
        inner: data::load_returns(&path, format).map_err(err)?,
    })
}

/// Trained hyperparameters of a GCPV or GP-EXP model.
#[pyclass(name = "Model", module = "gcpv", frozen)]
pub struct PyModel {
    inner: TrainedModel,
}

fn backend_for(kind: ModelKind, inference: &str) -> PyResult<Backend> {
    match (kind, inference) {
        (ModelKind::Gcpv, "laplace") => Ok(Backend::GcpvLa),
        (ModelKind::Gcpv, "mcmc") => Ok(Backend::GcpvMcmc),
        (ModelKind::GpExp, "laplace") => Ok(Backend::GpExp),
        (ModelKind::GpExp, "mcmc") => Err(value_err("gp-exp models use laplace inference only")),
        (_, other) => Err(value_err(format!("unknown inference '{other}'"))),
    }
}

fn summaries_dict<'py>(
    py: Python<'py>,
    times: &[f64],
    s: &[SigmaSummary],
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", times.to_vec())?;
    d.set_item(
        "mean_sigma",
        s.iter().map(|x| x.mean_sigma).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "var_sigma",
        s.iter().map(|x| x.var_sigma).collect::<Vec<_>>(),
    )?;
    d.set_item("mean_var", s.iter().map(|x| x.mean_var).collect::<Vec<_>>())?;
    d.set_item("lo95", s.iter().map(|x| x.lo95).collect::<Vec<_>>())?;
    d.set_item("hi95", s.iter().map(|x| x.hi95).collect::<Vec<_>>())?;
    Ok(d)
}

#[pymethods]
impl PyModel {
    /// Maximizes the Laplace log marginal likelihood on `series`.
    #[staticmethod]
    #[pyo3(signature = (series, model="gcpv", components=1, multistart=true))]
    fn fit(
        py: Python<'_>,
        series: &PyTimeSeries,
        model: &str,
        components: usize,
        multistart: bool,
    ) -> PyResult<Self> {
        let kind: ModelKind = model.parse().map_err(value_err)?;
        let mut config = ModelConfig::of(kind);
        if kind == ModelKind::Gcpv {
            config.components = components.max(1);
        }
        let ts = &series.inner;
        let opts = OptimizeOptions {
            multistart,
            ..Default::default()
        };
        let inner = py
            .detach(|| {
                let init = initial_hypers(&ts.times, &ts.values, &config)?;
                let res = optimize(&ts.times, &ts.values, &config, &init, &opts)?;
                TrainedModel::from_result(kind, &ts.times, &res)
            })
            .map_err(err)?;
        Ok(PyModel { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: TrainedModel::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.model.to_string()
    }

    #[getter]
    fn lengthscale(&self) -> f64 {
        self.inner.kernel.lengthscale
    }

    #[getter]
    fn amplitude(&self) -> f64 {
        self.inner.kernel.amplitude
    }

    #[getter]
    fn log_marginal(&self) -> f64 {
        self.inner.log_marginal
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    /// The warp `g` applied to each latent value.
    fn warp(&self, x: Vec<f64>) -> Vec<f64> {
        x.into_iter().map(|v| self.inner.warp.eval(v)).collect()
    }

    /// Predictive summaries of sigma at every observation time.
    #[pyo3(signature = (series, seed, draws=DEFAULT_DRAWS, inference="laplace", burnin=10_000, samples=10_000))]
    fn predict_historical<'py>(
        &self,
        py: Python<'py>,
        series: &PyTimeSeries,
        seed: u64,
        draws: usize,
        inference: &str,
        burnin: usize,
        samples: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let backend = backend_for(self.inner.model, inference)?;
        let mut task = ForecastTask::new(backend, Windowing::expanding(), seed);
        task.draws = draws;
        task.sampler = SamplerOptions {
            burn_in: burnin,
            samples,
            thin: 1,
        };
        let ts = &series.inner;
        let model = &self.inner;
        let s = py
            .detach(|| {
                let trained = Trained::from_hypers(model.model, model.hypers()?);
                run_historical(backend, &trained, ts, &task)
            })
            .map_err(err)?;
        summaries_dict(py, &ts.times, &s)
    }

    /// Predicted variance `horizons` steps past each prefix of `series`.
    /// Returns `{"t": origins, "h1": [...], ...}`.
    #[pyo3(signature = (series, seed, horizons=vec![1, 7, 30], draws=DEFAULT_DRAWS, min_history=1))]
    fn forecast<'py>(
        &self,
        py: Python<'py>,
        series: &PyTimeSeries,
        seed: u64,
        horizons: Vec<usize>,
        draws: usize,
        min_history: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let backend = backend_for(self.inner.model, "laplace")?;
        let mut task = ForecastTask::new(backend, Windowing::expanding(), seed);
        task.horizons = horizons.clone();
        task.draws = draws;
        let ts = &series.inner;
        let model = &self.inner;
        let rows = py
            .detach(|| {
                let trained = Trained::from_hypers(model.model, model.hypers()?);
                forecast_series(backend, &trained, ts, &task, min_history)
            })
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("t", rows.iter().map(|r| r.origin_t).collect::<Vec<_>>())?;
        for (j, h) in horizons.iter().enumerate() {
            d.set_item(
                format!("h{h}"),
                rows.iter()
                    .map(|r| r.values[j].mean_var)
                    .collect::<Vec<_>>(),
            )?;
        }
        Ok(d)
    }

    /// `(sigma, cdf, pdf)` rows of the prior marginal of sigma.
    #[pyo3(signature = (points=500))]
    fn marginal(&self, points: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        let g =
            gcpv::cli::marginal_grid(&self.inner.warp, self.inner.kernel.amplitude, points, 0.999)
                .map_err(err)?;
        Ok(g.into_iter().map(|[s, c, p]| (s, c, p)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(kind={}, lengthscale={:.4}, amplitude={:.4}, log_marginal={:.4})",
            self.inner.model,
            self.inner.kernel.lengthscale,
            self.inner.kernel.amplitude,
            self.inner.log_marginal
        )
    }
}

/// GARCH(1,1) maximum likelihood fit. Returns a dict of parameters.
#[pyfunction]
fn garch_fit<'py>(py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let fit = py.detach(|| garch::garch_fit(&values)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("omega", fit.params.omega)?;
    d.set_item("alpha", fit.params.alpha)?;
    d.set_item("beta", fit.params.beta)?;
    d.set_item("sigma0sq", fit.sigma0sq)?;
    d.set_item("log_likelihood", fit.log_likelihood)?;
    Ok(d)
}

/// Variance `h` steps past the end of `values` under fitted parameters.
#[pyfunction]
fn garch_forecast(
    values: Vec<f64>,
    omega: f64,
    alpha: f64,
    beta: f64,
    sigma0sq: f64,
    h: usize,
) -> PyResult<f64> {
    if h == 0 {
        return Err(value_err("horizon must be at least 1"));
    }
    let p = GarchParams::new(omega, alpha, beta).map_err(err)?;
    let (var, _) = garch::garch_filter(&p, &values, sigma0sq);
    Ok(garch::garch_forecast(
        &p,
        &values,
        *var.last().unwrap_or(&sigma0sq),
        h,
    ))
}

#[pyfunction]
fn mse(predicted: Vec<f64>, reference: Vec<f64>) -> PyResult<f64> {
    gcpv::bench::mse(&predicted, &reference).map_err(err)
}

/// Backtests `models` on `series`. Returns `(report_json, table)`.
#[pyfunction]
#[pyo3(signature = (series, models, seed, windowing="auto", horizons=vec![1, 7, 30], draws=DEFAULT_DRAWS))]
fn backtest(
    py: Python<'_>,
    series: &PyTimeSeries,
    models: Vec<String>,
    seed: u64,
    windowing: &str,
    horizons: Vec<usize>,
    draws: usize,
) -> PyResult<(String, String)> {
    let backends = models
        .iter()
        .map(|m| m.parse::<Backend>().map_err(value_err))
        .collect::<PyResult<Vec<_>>>()?;
    if backends.is_empty() {
        return Err(value_err("models must name at least one model"));
    }
    let ts = &series.inner;
    let windowing = match windowing {
        "auto" if ts.true_sigma.is_none() => Windowing::rolling(),
        "auto" | "expanding" => Windowing::expanding(),
        "rolling" => Windowing::rolling(),
        other => return Err(value_err(format!("unknown windowing '{other}'"))),
    };
    let mut template = ForecastTask::new(backends[0], windowing, seed);
    template.horizons = horizons;
    template.draws = draws;
    py.detach(|| {
        let mut report = MseReport::new(seed, &template.horizons);
        benchmark_dataset(&mut report, ts, &backends, &template)?;
        Ok((report.to_json()?, report.to_table()))
    })
    .map_err(err)
}

#[pymodule]
#[pyo3(name = "gcpv")]
pub fn gcpv_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTimeSeries>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(simulate_trig, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_jump, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_garch, m)?)?;
    m.add_function(wrap_pyfunction!(load_returns, m)?)?;
    m.add_function(wrap_pyfunction!(garch_fit, m)?)?;
    m.add_function(wrap_pyfunction!(garch_forecast, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(backtest, m)?)?;
    Ok(())
}
