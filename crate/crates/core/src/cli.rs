//! The `gcpv` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or input-format error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bench::{
    benchmark_dataset, forecast_series, run_historical, write_forecast_csv, write_points_csv,
    Backend, ForecastTask, MseReport, Runtime, Trained, Windowing, DEFAULT_DRAWS,
    DEFAULT_MIN_HISTORY, DEFAULT_RETRAIN_EVERY, DEFAULT_STEP, DEFAULT_WINDOW,
};
use crate::data::{
    load_returns, simulate_jump_with, simulate_trig, CsvFormat, JumpConfig, TimeSeries,
};
use crate::error::Error;
use crate::mcmc::SamplerOptions;
use crate::train::{
    initial_hypers, optimize, ModelConfig, ModelKind, OptimizeOptions, TrainedModel,
};
use crate::warp::WarpKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Share of forecast origins that must succeed for `backtest` to exit 0.
pub const BACKTEST_SUCCESS_SHARE: f64 = 0.9;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) => exit_code(e),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Json(_)
        | Error::NonPositivePrice { .. } => EXIT_IO,
        Error::WindowTooLarge { .. } => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

type CliResult<T = i32> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "gcpv",
    version,
    about = "Gaussian copula process volatility models"
)]
pub struct Cli {
    /// TOML file with a table per command ([simulate], [fit], ...); flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads [default: number of processors]
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a simulated dataset as CSV (t,y,true_sigma)
    Simulate(SimulateArgs),
    /// Train hyperparameters and write the model JSON
    Fit(FitArgs),
    /// Per-point historical predictions or multi-horizon forecasts as CSV
    Predict(PredictArgs),
    /// Compare models by variance MSE and write a report
    Backtest(BacktestArgs),
    /// Export the marginal cdf and pdf of sigma implied by a model
    Marginal(MarginalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Trig,
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inference {
    Laplace,
    Mcmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    Historical,
    Forecast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowingArg {
    Auto,
    Expanding,
    Rolling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Auto,
    Prices,
    Returns,
    Series,
}

impl From<FormatArg> for CsvFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Auto => CsvFormat::Auto,
            FormatArg::Prices => CsvFormat::Prices,
            FormatArg::Returns => CsvFormat::Returns,
            FormatArg::Series => CsvFormat::Series,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
pub enum ModelArg {
    #[value(name = "gcpv")]
    #[serde(rename = "gcpv")]
    Gcpv,
    #[value(name = "gp-exp")]
    #[serde(rename = "gp-exp")]
    GpExp,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Dataset to simulate
    #[arg(value_enum)]
    pub name: Option<DatasetName>,
    /// Random seed (required)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Intervals START:END with the high JUMP level, comma separated [default: 2:4]
    #[arg(long, value_name = "INTERVALS")]
    pub jump_intervals: Option<String>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// Data CSV (date,price / date,return / t,y[,true_sigma])
    pub data: Option<PathBuf>,
    /// Model family [default: gcpv]
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Inference used for the objective; only laplace is supported [default: laplace]
    #[arg(long, value_enum)]
    pub inference: Option<Inference>,
    /// Output model JSON [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for uniformity; training is deterministic
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV layout [default: auto]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Softplus terms in the gcpv warp [default: 1]
    #[arg(long)]
    pub components: Option<usize>,
    /// Restart from lengthscales scaled by 0.3 and 3 [default: true]
    #[arg(long)]
    pub multistart: Option<bool>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictArgs {
    /// Data CSV to condition on
    pub data: Option<PathBuf>,
    /// Model JSON written by `fit`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// What to predict [default: historical]
    #[arg(long, value_enum)]
    pub mode: Option<PredictMode>,
    /// Latent inference [default: laplace]
    #[arg(long, value_enum)]
    pub inference: Option<Inference>,
    /// Forecast horizons in steps, comma separated [default: 1,7,30]
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    /// Predictive draws per point [default: 10000]
    #[arg(long)]
    pub draws: Option<usize>,
    /// Random seed (required)
    #[arg(long)]
    pub seed: Option<u64>,
    /// MCMC burn-in transitions [default: 10000]
    #[arg(long)]
    pub burnin: Option<usize>,
    /// MCMC recorded samples [default: 10000]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Shortest prefix to forecast from [default: 1]
    #[arg(long)]
    pub min_history: Option<usize>,
    /// CSV layout [default: auto]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Output CSV [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestArgs {
    /// Data CSV
    pub data: Option<PathBuf>,
    /// Models to compare: gcpv-la, gcpv-mcmc, gp-exp, garch (comma separated, required)
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Random seed (required)
    #[arg(long)]
    pub seed: Option<u64>,
    /// auto picks expanding for data with true_sigma, rolling otherwise [default: auto]
    #[arg(long, value_enum)]
    pub windowing: Option<WindowingArg>,
    /// Rolling training window length [default: 120]
    #[arg(long)]
    pub window: Option<usize>,
    /// Rolling retraining interval [default: 7]
    #[arg(long)]
    pub step: Option<usize>,
    /// Expanding: first forecast origin [default: 30]
    #[arg(long)]
    pub min_history: Option<usize>,
    /// Expanding: retrain after this many new observations [default: 10]
    #[arg(long)]
    pub retrain_every: Option<usize>,
    /// Forecast horizons in steps, comma separated [default: 1,7,30]
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    /// Predictive draws per point [default: 10000]
    #[arg(long)]
    pub draws: Option<usize>,
    /// MCMC burn-in transitions [default: 10000]
    #[arg(long)]
    pub burnin: Option<usize>,
    /// MCMC recorded samples [default: 10000]
    #[arg(long)]
    pub samples: Option<usize>,
    /// CSV layout [default: auto]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Report JSON path [default: not written]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Text table path [default: standard output]
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Directory for per-model historical prediction CSVs [default: not written]
    #[arg(long)]
    pub points_dir: Option<PathBuf>,
    /// Include wall-clock runtimes in the report [default: false]
    #[arg(long)]
    pub timings: Option<bool>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginalArgs {
    /// Model JSON written by `fit`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Grid points [default: 500]
    #[arg(long)]
    pub points: Option<usize>,
    /// Output CSV (sigma,cdf,pdf) [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Per-command tables of the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    simulate: SimulateArgs,
    fit: FitArgs,
    predict: PredictArgs,
    backtest: BacktestArgs,
    marginal: MarginalArgs,
}

macro_rules! merge {
    ($flags:expr, $cfg:expr; $($field:ident),* $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $cfg.$field.take(); } )*
    };
}

fn load_config(path: &Path) -> CliResult<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn required<T>(v: Option<T>, what: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("{what} is required")))
}

/// Writes to `path` through a temporary file in the same directory, or to
/// standard output when `path` is `None`.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> crate::Result<()> {
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
            tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
            tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli)),
            Err(e) => Err(CliError::Usage(format!("cannot start {n} workers: {e}"))),
        },
        None => dispatch(cli),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("gcpv: {e}");
            e.exit_code()
        }
    }
}

/// Initializes logging from `GCPV_LOG` (error|warn|info|debug; default warn).
pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("GCPV_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
}

fn dispatch(cli: Cli) -> CliResult {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Simulate(mut a) => {
            merge!(a, cfg.simulate; name, seed, out, jump_intervals);
            cmd_simulate(a)
        }
        Command::Fit(mut a) => {
            merge!(a, cfg.fit; data, model, inference, out, seed, format, components, multistart);
            cmd_fit(a)
        }
        Command::Predict(mut a) => {
            merge!(a, cfg.predict; data, model, mode, inference, horizons, draws, seed, burnin, samples,
                min_history, format, out);
            cmd_predict(a)
        }
        Command::Backtest(mut a) => {
            merge!(a, cfg.backtest; data, models, seed, windowing, window, step, min_history, retrain_every,
                horizons, draws, burnin, samples, format, out, table, points_dir, timings);
            cmd_backtest(a)
        }
        Command::Marginal(mut a) => {
            merge!(a, cfg.marginal; model, points, out);
            cmd_marginal(a)
        }
    }
}

fn parse_intervals(s: &str) -> CliResult<Vec<(f64, f64)>> {
    s.split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("interval '{part}' is not START:END")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("bad number '{v}' in --jump-intervals")))
            };
            let (a, b) = (parse(a)?, parse(b)?);
            if !(a < b) {
                return Err(CliError::Usage(format!("interval {a}:{b} is empty")));
            }
            Ok((a, b))
        })
        .collect()
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>) -> crate::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let name = required(a.name, "dataset name (trig or jump)")?;
    let seed = required(a.seed, "--seed")?;
    let ts = match name {
        DatasetName::Trig => {
            if a.jump_intervals.is_some() {
                return Err(CliError::Usage(
                    "--jump-intervals only applies to jump".into(),
                ));
            }
            simulate_trig(seed)
        }
        DatasetName::Jump => {
            let mut cfg = JumpConfig::default();
            if let Some(s) = &a.jump_intervals {
                cfg.high_intervals = parse_intervals(s)?;
            }
            simulate_jump_with(seed, &cfg)
        }
    };
    let bytes = csv_bytes(|b| ts.write_csv(b))?;
    write_output(a.out.as_deref(), &bytes)?;
    Ok(EXIT_OK)
}

fn load_data(path: &Path, format: Option<FormatArg>) -> crate::Result<TimeSeries> {
    load_returns(path, format.unwrap_or(FormatArg::Auto).into())
}

fn cmd_fit(a: FitArgs) -> CliResult {
    let data = required(a.data, "data file")?;
    let kind = match a.model.unwrap_or(ModelArg::Gcpv) {
        ModelArg::Gcpv => ModelKind::Gcpv,
        ModelArg::GpExp => ModelKind::GpExp,
    };
    if a.inference == Some(Inference::Mcmc) {
        return Err(CliError::Usage(
            "fit supports --inference laplace only".into(),
        ));
    }
    let mut config = ModelConfig::of(kind);
    if let Some(k) = a.components {
        if kind != ModelKind::Gcpv || k == 0 {
            return Err(CliError::Usage(
                "--components needs model gcpv and a value >= 1".into(),
            ));
        }
        config.components = k;
    }
    let ts = load_data(&data, a.format)?;
    let opts = OptimizeOptions {
        multistart: a.multistart.unwrap_or(true),
        ..Default::default()
    };
    let init = initial_hypers(&ts.times, &ts.values, &config)?;
    let res = optimize(&ts.times, &ts.values, &config, &init, &opts)?;
    let model = TrainedModel::from_result(kind, &ts.times, &res)?;
    write_output(a.out.as_deref(), (model.to_json()? + "\n").as_bytes())?;
    let summary = format!(
        "n={} iterations={} log_q={:.6} converged={}",
        ts.len(),
        res.iterations,
        res.objective,
        model.converged
    );
    if a.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(if model.converged {
        EXIT_OK
    } else {
        EXIT_NUMERIC
    })
}

fn cmd_predict(a: PredictArgs) -> CliResult {
    let data = required(a.data, "data file")?;
    let model_path = required(a.model, "--model")?;
    let seed = required(a.seed, "--seed")?;
    let model = TrainedModel::load(&model_path)?;
    let ts = load_data(&data, a.format)?;
    let backend = match (model.model, a.inference.unwrap_or(Inference::Laplace)) {
        (ModelKind::Gcpv, Inference::Laplace) => Backend::GcpvLa,
        (ModelKind::Gcpv, Inference::Mcmc) => Backend::GcpvMcmc,
        (ModelKind::GpExp, Inference::Laplace) => Backend::GpExp,
        (ModelKind::GpExp, Inference::Mcmc) => {
            return Err(CliError::Usage(
                "gp-exp models use laplace inference only".into(),
            ))
        }
    };
    let mut task = ForecastTask::new(backend, Windowing::expanding(), seed);
    if let Some(h) = a.horizons {
        task.horizons = h;
    }
    task.draws = a.draws.unwrap_or(DEFAULT_DRAWS);
    let defaults = SamplerOptions::default();
    task.sampler = SamplerOptions {
        burn_in: a.burnin.unwrap_or(defaults.burn_in),
        samples: a.samples.unwrap_or(defaults.samples),
        thin: 1,
    };
    task.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if task.sampler.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let trained = Trained::from_hypers(model.model, model.hypers()?);
    let bytes = match a.mode.unwrap_or(PredictMode::Historical) {
        PredictMode::Historical => {
            let s = run_historical(backend, &trained, &ts, &task)?;
            csv_bytes(|b| write_points_csv(b, &ts.times, &s, &ts.reference_variance()))?
        }
        PredictMode::Forecast => {
            let rows = forecast_series(backend, &trained, &ts, &task, a.min_history.unwrap_or(1))?;
            csv_bytes(|b| write_forecast_csv(b, &task.horizons, &rows))?
        }
    };
    write_output(a.out.as_deref(), &bytes)?;
    Ok(EXIT_OK)
}

fn cmd_backtest(a: BacktestArgs) -> CliResult {
    let data = required(a.data, "data file")?;
    let names = required(a.models, "--models")?;
    let names: Vec<&str> = names
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(CliError::Usage(
            "--models must name at least one model".into(),
        ));
    }
    let mut backends = Vec::new();
    for n in names {
        let b: Backend = n.parse().map_err(CliError::Usage)?;
        if !backends.contains(&b) {
            backends.push(b);
        }
    }
    let seed = required(a.seed, "--seed")?;
    let ts = load_data(&data, a.format)?;

    let rolling = match a.windowing.unwrap_or(WindowingArg::Auto) {
        WindowingArg::Auto => ts.true_sigma.is_none(),
        WindowingArg::Expanding => false,
        WindowingArg::Rolling => true,
    };
    let windowing = if rolling {
        if a.min_history.is_some() || a.retrain_every.is_some() {
            return Err(CliError::Usage(
                "--min-history/--retrain-every apply to expanding windows".into(),
            ));
        }
        Windowing::Rolling {
            window: a.window.unwrap_or(DEFAULT_WINDOW),
            step: a.step.unwrap_or(DEFAULT_STEP),
        }
    } else {
        if a.window.is_some() || a.step.is_some() {
            return Err(CliError::Usage(
                "--window/--step apply to rolling windows".into(),
            ));
        }
        Windowing::Expanding {
            min_history: a.min_history.unwrap_or(DEFAULT_MIN_HISTORY),
            retrain_every: a.retrain_every.unwrap_or(DEFAULT_RETRAIN_EVERY),
        }
    };
    let mut task = ForecastTask::new(backends[0], windowing, seed);
    if let Some(h) = a.horizons {
        task.horizons = h;
    }
    task.draws = a.draws.unwrap_or(DEFAULT_DRAWS);
    let defaults = SamplerOptions::default();
    task.sampler = SamplerOptions {
        burn_in: a.burnin.unwrap_or(defaults.burn_in),
        samples: a.samples.unwrap_or(defaults.samples),
        thin: 1,
    };
    task.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let mut report = MseReport::new(seed, &task.horizons);
    let results = benchmark_dataset(&mut report, &ts, &backends, &task)?;
    if a.timings.unwrap_or(false) {
        report.runtimes = Some(
            results
                .iter()
                .map(|r| Runtime {
                    dataset: ts.name.clone(),
                    model: r.row.model,
                    seconds: r.seconds,
                })
                .collect(),
        );
    }

    if let Some(dir) = &a.points_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for r in &results {
            if let Some(h) = &r.historical {
                let bytes =
                    csv_bytes(|b| write_points_csv(b, &h.times, &h.summaries, &h.reference_var))?;
                write_output(
                    Some(&dir.join(format!("{}_{}.csv", ts.name, r.row.model))),
                    &bytes,
                )?;
            }
        }
    }
    if let Some(out) = &a.out {
        write_output(Some(out), report.to_json()?.as_bytes())?;
    }
    write_output(a.table.as_deref(), report.to_table().as_bytes())?;

    let (mut attempted, mut excluded) = (0usize, 0usize);
    for r in &results {
        attempted += r.forecast.attempted;
        excluded += r.forecast.excluded;
        if r.forecast.excluded > 0 {
            eprintln!(
                "gcpv: {}: {} of {} forecast origins failed",
                r.row.model, r.forecast.excluded, r.forecast.attempted
            );
        }
        if r.historical.is_none() {
            eprintln!("gcpv: {}: historical prediction failed", r.row.model);
        }
    }
    let ok_share = if attempted == 0 {
        0.0
    } else {
        1.0 - excluded as f64 / attempted as f64
    };
    let hist_ok = results.iter().all(|r| r.historical.is_some());
    Ok(if ok_share >= BACKTEST_SUCCESS_SHARE && hist_ok {
        EXIT_OK
    } else {
        EXIT_NUMERIC
    })
}

/// `(sigma, cdf, pdf)` over `[floor + eps, upper quantile]` of the prior
/// marginal of `sigma = g(f)` with `f ~ N(0, amplitude)`.
pub fn marginal_grid(
    warp: &WarpKind,
    amplitude: f64,
    points: usize,
    upper_prob: f64,
) -> crate::Result<Vec<[f64; 3]>> {
    if points < 2 {
        return Err(Error::InvalidParameter(
            "marginal grid needs at least 2 points".into(),
        ));
    }
    warp.validate()?;
    let sd = amplitude.sqrt();
    let z = Normal::standard().inverse_cdf(upper_prob);
    let hi = warp.eval(sd * z);
    let floor = warp.floor();
    let lo = floor + 1e-9 * (hi - floor);
    if !(hi > lo) {
        return Err(Error::InvalidParameter(
            "warp is degenerate: no spread above the floor".into(),
        ));
    }
    (0..points)
        .map(|i| {
            let s = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let x = warp.inverse(s)?;
            let cdf = crate::warp::std_normal_cdf(x / sd);
            let pdf = crate::warp::std_normal_pdf(x / sd) / (sd * warp.deriv(x));
            Ok([s, cdf, pdf])
        })
        .collect()
}

fn cmd_marginal(a: MarginalArgs) -> CliResult {
    let path = required(a.model, "--model")?;
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let model = TrainedModel::from_json(&text)?;
    let grid = marginal_grid(
        &model.warp,
        model.kernel.amplitude,
        a.points.unwrap_or(500),
        0.999,
    )?;
    let bytes = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        let e = |e: csv::Error| Error::InvalidParameter(format!("csv write: {e}"));
        w.write_record(["sigma", "cdf", "pdf"]).map_err(e)?;
        for r in &grid {
            w.write_record(r.map(|v| v.to_string())).map_err(e)?;
        }
        w.flush().map_err(|e| Error::io("<buffer>", e))
    })?;
    write_output(a.out.as_deref(), &bytes)?;
    Ok(EXIT_OK)
}
