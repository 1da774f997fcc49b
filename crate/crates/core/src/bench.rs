//! Forecasting and historical-volatility experiments with MSE reporting.
//!
//! Two windowing schemes are supported. `Expanding` conditions on every
//! observation up to the forecast origin and retrains on a fixed cadence;
//! `Rolling` trains on a trailing window, retrains every `step` origins and
//! forecasts daily in between. All errors are measured in variance units.

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::data::{rolling_windows, TimeSeries};
use crate::error::{check_len, Error, Result};
use crate::garch::{garch_fit, GarchFit};
use crate::kernel::{Covariance, KernelSpec};
use crate::laplace::{find_mode, NewtonOptions, PredictiveGaussian};
use crate::likelihood::{GcpvLikelihood, LikelihoodModel};
use crate::mcmc::{sample_posterior, MixturePredictor, SamplerOptions};
use crate::rng::{stream, Rng as ChainRng};
use crate::train::{
    initial_hypers, optimize, HyperVector, ModelConfig, ModelKind, OptimizeOptions,
};
use crate::warp::WarpKind;

pub const DEFAULT_HORIZONS: [usize; 3] = [1, 7, 30];
pub const DEFAULT_DRAWS: usize = 10_000;
/// Shortest prefix any backend is asked to forecast from; GARCH needs this
/// many points to fit.
pub const DEFAULT_MIN_HISTORY: usize = crate::garch::MIN_FIT_LEN;
pub const DEFAULT_RETRAIN_EVERY: usize = 10;
pub const DEFAULT_WINDOW: usize = 120;
pub const DEFAULT_STEP: usize = 7;

/// RNG stream reserved for historical prediction; forecast origins use
/// their own index.
const HISTORICAL_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Backend {
    #[serde(rename = "gcpv-la")]
    GcpvLa,
    #[serde(rename = "gcpv-mcmc")]
    GcpvMcmc,
    #[serde(rename = "gp-exp")]
    GpExp,
    #[serde(rename = "garch")]
    Garch,
}

impl Backend {
    pub const ALL: [Backend; 4] = [
        Backend::GcpvLa,
        Backend::GcpvMcmc,
        Backend::GpExp,
        Backend::Garch,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Backend::GcpvLa => "gcpv-la",
            Backend::GcpvMcmc => "gcpv-mcmc",
            Backend::GpExp => "gp-exp",
            Backend::Garch => "garch",
        }
    }

    /// Display label used in the text table.
    pub fn label(&self) -> &'static str {
        match self {
            Backend::GcpvLa => "GCPV (LA)",
            Backend::GcpvMcmc => "GCPV (MCMC)",
            Backend::GpExp => "GP-EXP",
            Backend::Garch => "GARCH",
        }
    }

    pub fn model_kind(&self) -> Option<ModelKind> {
        match self {
            Backend::GcpvLa | Backend::GcpvMcmc => Some(ModelKind::Gcpv),
            Backend::GpExp => Some(ModelKind::GpExp),
            Backend::Garch => None,
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| {
                format!("unknown model '{s}' (expected gcpv-la, gcpv-mcmc, gp-exp or garch)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Windowing {
    Expanding {
        min_history: usize,
        retrain_every: usize,
    },
    Rolling {
        window: usize,
        step: usize,
    },
}

impl Windowing {
    pub fn expanding() -> Self {
        Windowing::Expanding {
            min_history: DEFAULT_MIN_HISTORY,
            retrain_every: DEFAULT_RETRAIN_EVERY,
        }
    }

    pub fn rolling() -> Self {
        Windowing::Rolling {
            window: DEFAULT_WINDOW,
            step: DEFAULT_STEP,
        }
    }

    pub fn is_rolling(&self) -> bool {
        matches!(self, Windowing::Rolling { .. })
    }
}

#[derive(Debug, Clone)]
pub struct ForecastTask {
    pub backend: Backend,
    pub horizons: Vec<usize>,
    pub windowing: Windowing,
    pub seed: u64,
    /// Predictive draws per target.
    pub draws: usize,
    pub sampler: SamplerOptions,
    pub optimize: OptimizeOptions,
}

impl ForecastTask {
    pub fn new(backend: Backend, windowing: Windowing, seed: u64) -> Self {
        ForecastTask {
            backend,
            horizons: DEFAULT_HORIZONS.to_vec(),
            windowing,
            seed,
            draws: DEFAULT_DRAWS,
            sampler: SamplerOptions::default(),
            optimize: OptimizeOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::InvalidParameter(
                "horizons must be nonempty and all >= 1".into(),
            ));
        }
        if self.draws == 0 {
            return Err(Error::InvalidParameter("draws must be at least 1".into()));
        }
        match self.windowing {
            Windowing::Expanding {
                min_history,
                retrain_every,
            } if min_history < 2 || retrain_every == 0 => Err(Error::InvalidParameter(
                "expanding windows need min_history >= 2 and retrain_every >= 1".into(),
            )),
            Windowing::Rolling { window, step } if window < 2 || step == 0 => Err(
                Error::InvalidParameter("rolling windows need window >= 2 and step >= 1".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Hyperparameters for one backend trained on one stretch of data.
#[derive(Debug, Clone)]
pub enum Trained {
    Gp {
        kind: ModelKind,
        z: HyperVector,
        log_marginal: f64,
    },
    Garch(GarchFit),
}

impl Trained {
    pub fn from_hypers(kind: ModelKind, z: HyperVector) -> Self {
        Trained::Gp {
            kind,
            z,
            log_marginal: f64::NAN,
        }
    }
}

pub fn fit_backend(
    backend: Backend,
    t: &[f64],
    y: &[f64],
    opts: &OptimizeOptions,
) -> Result<Trained> {
    match backend.model_kind() {
        Some(kind) => {
            let config = ModelConfig::of(kind);
            let init = initial_hypers(t, y, &config)?;
            let res = optimize(t, y, &config, &init, opts)?;
            Ok(Trained::Gp {
                kind,
                z: res.z,
                log_marginal: res.objective,
            })
        }
        None => Ok(Trained::Garch(garch_fit(y)?)),
    }
}

/// Sample moments of `sigma` and `sigma^2` at one time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSummary {
    pub mean_sigma: f64,
    pub var_sigma: f64,
    /// Sample mean of `sigma^2`: the variance prediction scored by MSE.
    pub mean_var: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl SigmaSummary {
    /// A point prediction with no spread.
    pub fn point(variance: f64) -> Self {
        let s = variance.sqrt();
        SigmaSummary {
            mean_sigma: s,
            var_sigma: 0.0,
            mean_var: variance,
            lo95: s,
            hi95: s,
        }
    }

    pub fn from_sigmas(sigmas: Vec<f64>) -> Self {
        let n = sigmas.len() as f64;
        let mean = sigmas.iter().sum::<f64>() / n;
        let mean_sq = sigmas.iter().map(|s| s * s).sum::<f64>() / n;
        let var = if sigmas.len() > 1 {
            sigmas.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut data = Data::new(sigmas);
        SigmaSummary {
            mean_sigma: mean,
            var_sigma: var,
            mean_var: mean_sq,
            lo95: data.quantile(0.025),
            hi95: data.quantile(0.975),
        }
    }

    fn from_latent_draws(latent: impl Iterator<Item = f64>, warp: &WarpKind) -> Self {
        Self::from_sigmas(latent.map(|f| warp.eval(f)).collect())
    }
}

/// Draws from `N(mean, variance)`, mapped through the warp and summarized.
fn summarize_gaussian(
    p: &PredictiveGaussian,
    warp: &WarpKind,
    draws: usize,
    rng: &mut ChainRng,
) -> SigmaSummary {
    let sd = p.variance.sqrt();
    SigmaSummary::from_latent_draws(
        (0..draws).map(|_| p.mean + sd * rng.sample::<f64, _>(StandardNormal)),
        warp,
    )
}

/// Laplace predictive of the latent `f` at `targets` for any likelihood.
pub fn latent_predictions(
    kernel: &KernelSpec,
    t_obs: &[f64],
    y_obs: &[f64],
    lik: &dyn LikelihoodModel,
    targets: &[f64],
) -> Result<Vec<PredictiveGaussian>> {
    check_len(t_obs.len(), y_obs.len())?;
    let k = kernel.matrix_unchecked(t_obs, kernel.default_jitter());
    let fit = find_mode(&k, y_obs, lik, &NewtonOptions::default())?;
    targets
        .iter()
        .map(|&ts| fit.predict(&kernel.cross(t_obs, ts), kernel.variance()))
        .collect()
}

/// Where a prediction is wanted: a time for the GP backends, a step count
/// past the last observation for GARCH.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub t: f64,
    pub steps: usize,
}

/// Predictive summaries at future targets given observations `(t_obs, y_obs)`.
pub fn forecast_sigma(
    backend: Backend,
    trained: &Trained,
    t_obs: &[f64],
    y_obs: &[f64],
    targets: &[Target],
    task: &ForecastTask,
    rng: &mut ChainRng,
) -> Result<Vec<SigmaSummary>> {
    match trained {
        Trained::Garch(fit) => Ok(targets
            .iter()
            .map(|tg| SigmaSummary::point(fit.forecast(y_obs, tg.steps)))
            .collect()),
        Trained::Gp { z, .. } => {
            let times: Vec<f64> = targets.iter().map(|tg| tg.t).collect();
            gp_sigma(backend, z, t_obs, y_obs, &times, task, rng)
        }
    }
}

fn gp_sigma(
    backend: Backend,
    z: &HyperVector,
    t_obs: &[f64],
    y_obs: &[f64],
    times: &[f64],
    task: &ForecastTask,
    rng: &mut ChainRng,
) -> Result<Vec<SigmaSummary>> {
    let (kernel, warp) = z.unpack()?;
    let lik = GcpvLikelihood::new(warp.clone());
    match backend {
        Backend::GcpvMcmc => {
            let k = kernel.matrix_unchecked(t_obs, kernel.default_jitter());
            let chain_seed: u64 = rng.random();
            let ss = sample_posterior(&k, y_obs, &lik, &task.sampler, chain_seed)?;
            let mp = MixturePredictor::new(&ss, &k)?;
            times
                .iter()
                .map(|&ts| {
                    let comps = mp.components(&kernel.cross(t_obs, ts), kernel.variance())?;
                    Ok(SigmaSummary::from_latent_draws(
                        comps.draw(task.draws, rng).into_iter(),
                        &warp,
                    ))
                })
                .collect()
        }
        _ => {
            let preds = latent_predictions(&kernel, t_obs, y_obs, &lik, times)?;
            Ok(preds
                .iter()
                .map(|p| summarize_gaussian(p, &warp, task.draws, rng))
                .collect())
        }
    }
}

/// Predictive summaries of `sigma` at every observation time of `ts`.
pub fn run_historical(
    backend: Backend,
    trained: &Trained,
    ts: &TimeSeries,
    task: &ForecastTask,
) -> Result<Vec<SigmaSummary>> {
    let mut rng = stream(task.seed, HISTORICAL_STREAM);
    historical_with(backend, trained, &ts.times, &ts.values, task, &mut rng)
}

fn historical_with(
    backend: Backend,
    trained: &Trained,
    t: &[f64],
    y: &[f64],
    task: &ForecastTask,
    rng: &mut ChainRng,
) -> Result<Vec<SigmaSummary>> {
    match trained {
        Trained::Garch(fit) => Ok(fit
            .filtered(y)
            .into_iter()
            .map(SigmaSummary::point)
            .collect()),
        Trained::Gp { z, .. } => gp_sigma(backend, z, t, y, t, task, rng),
    }
}

pub fn mse(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    check_len(predicted.len(), reference.len())?;
    if predicted.is_empty() {
        return Err(Error::InvalidParameter("mse of empty vectors".into()));
    }
    Ok(predicted
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r).powi(2))
        .sum::<f64>()
        / predicted.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// Number of observations available when the forecast was made.
    pub origin: usize,
    pub horizon: usize,
    pub target: usize,
    pub target_t: f64,
    pub summary: SigmaSummary,
    pub reference_var: f64,
}

/// One training stretch `[start, end)` and its outcome.
#[derive(Debug, Clone)]
pub struct TrainSlot {
    pub start: usize,
    pub end: usize,
    pub trained: std::result::Result<Trained, String>,
}

#[derive(Debug, Clone)]
pub struct ForecastRun {
    pub backend: Backend,
    pub records: Vec<ForecastRecord>,
    pub attempted: usize,
    pub excluded: usize,
    pub failures: Vec<String>,
}

impl ForecastRun {
    /// MSE over successful forecasts at one horizon, with their count.
    pub fn mse_at(&self, horizon: usize) -> (Option<f64>, usize) {
        let (p, r): (Vec<f64>, Vec<f64>) = self
            .records
            .iter()
            .filter(|r| r.horizon == horizon)
            .map(|r| (r.summary.mean_var, r.reference_var))
            .unzip();
        (mse(&p, &r).ok(), p.len())
    }
}

/// Forecast origins (prefix lengths) with at least one scorable target,
/// paired with the training slot each uses and the window start.
fn schedule(
    task: &ForecastTask,
    n: usize,
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize, usize)>)> {
    let hmin = *task.horizons.iter().min().unwrap_or(&1);
    let last_origin = n.saturating_sub(hmin);
    match task.windowing {
        Windowing::Expanding {
            min_history,
            retrain_every,
        } => {
            if min_history > n {
                return Err(Error::WindowTooLarge {
                    window: min_history,
                    len: n,
                });
            }
            let slots: Vec<(usize, usize)> = (min_history..=n)
                .step_by(retrain_every)
                .map(|r| (0, r))
                .collect();
            let origins = (min_history..=last_origin.min(n))
                .map(|m| (m, (m - min_history) / retrain_every, 0))
                .collect();
            Ok((slots, origins))
        }
        Windowing::Rolling { window, step } => {
            let wins = rolling_windows(n, window, step)?;
            let slots = wins.iter().map(|w| (w.start, w.origin)).collect();
            let origins = wins
                .iter()
                .enumerate()
                .flat_map(|(i, w)| {
                    let next = (w.origin + step).min(n);
                    (w.origin..next).map(move |d| (d, i, d - window))
                })
                .filter(|&(d, _, _)| d <= last_origin)
                .collect();
            Ok((slots, origins))
        }
    }
}

/// Trains every slot of the schedule. Failures are kept, not propagated.
pub fn train_schedule(task: &ForecastTask, ts: &TimeSeries) -> Result<Vec<TrainSlot>> {
    task.validate()?;
    let (slots, _) = schedule(task, ts.len())?;
    Ok(slots
        .par_iter()
        .map(|&(start, end)| TrainSlot {
            start,
            end,
            trained: fit_backend(
                task.backend,
                &ts.times[start..end],
                &ts.values[start..end],
                &task.optimize,
            )
            .map_err(|e| e.to_string()),
        })
        .collect())
}

/// Forecasts at every origin of the task's windowing scheme.
pub fn run_forecast(task: &ForecastTask, ts: &TimeSeries) -> Result<ForecastRun> {
    let slots = train_schedule(task, ts)?;
    forecast_with(task, ts, &slots)
}

pub fn forecast_with(
    task: &ForecastTask,
    ts: &TimeSeries,
    slots: &[TrainSlot],
) -> Result<ForecastRun> {
    task.validate()?;
    let n = ts.len();
    let (_, origins) = schedule(task, n)?;
    let reference = ts.reference_variance();

    let per_origin: Vec<std::result::Result<Vec<ForecastRecord>, String>> = origins
        .par_iter()
        .map(|&(m, slot, start)| {
            let trained = slots[slot]
                .trained
                .as_ref()
                .map_err(|e| format!("origin {m}: training failed: {e}"))?;
            let horizons: Vec<usize> = task
                .horizons
                .iter()
                .copied()
                .filter(|h| m - 1 + h < n)
                .collect();
            let targets: Vec<Target> = horizons
                .iter()
                .map(|&h| Target {
                    t: ts.times[m - 1 + h],
                    steps: h,
                })
                .collect();
            let mut rng = stream(task.seed, m as u64);
            let summaries = forecast_sigma(
                task.backend,
                trained,
                &ts.times[start..m],
                &ts.values[start..m],
                &targets,
                task,
                &mut rng,
            )
            .map_err(|e| format!("origin {m}: {e}"))?;
            Ok(horizons
                .iter()
                .zip(summaries)
                .map(|(&h, summary)| ForecastRecord {
                    origin: m,
                    horizon: h,
                    target: m - 1 + h,
                    target_t: ts.times[m - 1 + h],
                    summary,
                    reference_var: reference[m - 1 + h],
                })
                .collect())
        })
        .collect();

    let mut run = ForecastRun {
        backend: task.backend,
        records: Vec::new(),
        attempted: per_origin.len(),
        excluded: 0,
        failures: Vec::new(),
    };
    for r in per_origin {
        match r {
            Ok(recs) => run.records.extend(recs),
            Err(e) => {
                log::warn!("{}: {e}", task.backend);
                run.excluded += 1;
                run.failures.push(e);
            }
        }
    }
    Ok(run)
}

/// Per-point historical predictions with their reference variances.
#[derive(Debug, Clone)]
pub struct HistoricalRun {
    pub backend: Backend,
    pub times: Vec<f64>,
    pub summaries: Vec<SigmaSummary>,
    pub reference_var: Vec<f64>,
    pub mse: Option<f64>,
    /// True when predictions are assessed on their own training data
    /// against squared observations.
    pub in_sample: bool,
    pub windows: usize,
    pub excluded: usize,
}

/// Historical prediction under the task's windowing: one fit on the whole
/// series for `Expanding`; for `Rolling`, every training window predicts
/// its own span and the window MSEs are averaged.
pub fn historical_experiment(
    task: &ForecastTask,
    ts: &TimeSeries,
    slots: Option<&[TrainSlot]>,
) -> Result<HistoricalRun> {
    task.validate()?;
    let reference = ts.reference_variance();
    match task.windowing {
        Windowing::Expanding { .. } => {
            let trained = fit_backend(task.backend, &ts.times, &ts.values, &task.optimize)?;
            let summaries = run_historical(task.backend, &trained, ts, task)?;
            let pred: Vec<f64> = summaries.iter().map(|s| s.mean_var).collect();
            Ok(HistoricalRun {
                backend: task.backend,
                times: ts.times.clone(),
                mse: Some(mse(&pred, &reference)?),
                summaries,
                reference_var: reference,
                in_sample: ts.true_sigma.is_none(),
                windows: 1,
                excluded: 0,
            })
        }
        Windowing::Rolling { .. } => {
            let owned;
            let slots = match slots {
                Some(s) => s,
                None => {
                    owned = train_schedule(task, ts)?;
                    &owned
                }
            };
            let results: Vec<Option<(f64, Vec<SigmaSummary>)>> = slots
                .par_iter()
                .enumerate()
                .map(|(i, slot)| {
                    let trained = slot.trained.as_ref().ok()?;
                    let mut rng = stream(task.seed, HISTORICAL_STREAM - 1 - i as u64);
                    let (t, y) = (
                        &ts.times[slot.start..slot.end],
                        &ts.values[slot.start..slot.end],
                    );
                    let s = historical_with(task.backend, trained, t, y, task, &mut rng).ok()?;
                    let pred: Vec<f64> = s.iter().map(|s| s.mean_var).collect();
                    Some((mse(&pred, &reference[slot.start..slot.end]).ok()?, s))
                })
                .collect();
            let ok: Vec<&(f64, Vec<SigmaSummary>)> = results.iter().flatten().collect();
            let mean_mse = if ok.is_empty() {
                None
            } else {
                Some(ok.iter().map(|r| r.0).sum::<f64>() / ok.len() as f64)
            };
            // the last successful window gives the per-point series
            let (times, summaries, refs) =
                match slots.iter().zip(&results).rev().find(|(_, r)| r.is_some()) {
                    Some((slot, Some((_, s)))) => (
                        ts.times[slot.start..slot.end].to_vec(),
                        s.clone(),
                        reference[slot.start..slot.end].to_vec(),
                    ),
                    _ => (Vec::new(), Vec::new(), Vec::new()),
                };
            Ok(HistoricalRun {
                backend: task.backend,
                times,
                summaries,
                reference_var: refs,
                mse: mean_mse,
                in_sample: ts.true_sigma.is_none(),
                windows: slots.len(),
                excluded: results.iter().filter(|r| r.is_none()).count(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMse {
    pub horizon: usize,
    pub mse: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub dataset: String,
    pub model: Backend,
    pub historical: Option<f64>,
    pub historical_in_sample: bool,
    pub forecasts: Vec<HorizonMse>,
    pub origins: usize,
    pub excluded_origins: usize,
    pub excluded_windows: usize,
}

impl MseRow {
    pub fn forecast_mse(&self, horizon: usize) -> Option<f64> {
        self.forecasts
            .iter()
            .find(|h| h.horizon == horizon)
            .and_then(|h| h.mse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub n: usize,
    pub windowing: Windowing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub dataset: String,
    pub model: Backend,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub seed: u64,
    pub horizons: Vec<usize>,
    pub datasets: Vec<DatasetMeta>,
    pub rows: Vec<MseRow>,
    /// Wall-clock times. Omitted unless requested so that reports are
    /// byte-reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtimes: Option<Vec<Runtime>>,
}

impl MseReport {
    pub fn new(seed: u64, horizons: &[usize]) -> Self {
        MseReport {
            seed,
            horizons: horizons.to_vec(),
            datasets: Vec::new(),
            rows: Vec::new(),
            runtimes: None,
        }
    }

    pub fn row(&self, dataset: &str, model: Backend) -> Option<&MseRow> {
        self.rows
            .iter()
            .find(|r| r.dataset == dataset && r.model == model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Aligned text table: one row per (dataset, model), columns for the
    /// historical MSE and each horizon.
    pub fn to_table(&self) -> String {
        let mut header = vec![
            "Data set".to_string(),
            "Model".to_string(),
            "Historical".to_string(),
        ];
        header.extend(self.horizons.iter().map(|h| format!("{h} step")));
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3e}"));
        let mut lines: Vec<Vec<String>> = vec![header];
        let mut last_dataset = None;
        for r in &self.rows {
            let ds = if last_dataset == Some(&r.dataset) {
                String::new()
            } else {
                r.dataset.clone()
            };
            last_dataset = Some(&r.dataset);
            let mut hist = fmt(r.historical);
            if r.historical_in_sample && r.historical.is_some() {
                hist.push('*');
            }
            let mut line = vec![ds, r.model.label().to_string(), hist];
            line.extend(self.horizons.iter().map(|&h| fmt(r.forecast_mse(h))));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|j| lines.iter().map(|l| l[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    if j < 2 {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        if self
            .rows
            .iter()
            .any(|r| r.historical_in_sample && r.historical.is_some())
        {
            out.push_str(
                "* in-sample: assessed on the training data against squared observations\n",
            );
        }
        out
    }
}

/// Everything computed for one backend on one dataset.
#[derive(Debug, Clone)]
pub struct BackendResult {
    pub row: MseRow,
    pub forecast: ForecastRun,
    pub historical: Option<HistoricalRun>,
    pub seconds: f64,
}

/// Runs the historical and forecast experiments for one backend.
pub fn evaluate_backend(task: &ForecastTask, ts: &TimeSeries) -> Result<BackendResult> {
    let start = Instant::now();
    let slots = train_schedule(task, ts)?;
    let forecast = forecast_with(task, ts, &slots)?;
    let historical = match historical_experiment(task, ts, Some(&slots)) {
        Ok(h) => Some(h),
        Err(e) => {
            log::warn!("{} historical prediction failed: {e}", task.backend);
            None
        }
    };
    let row = MseRow {
        dataset: ts.name.clone(),
        model: task.backend,
        historical: historical.as_ref().and_then(|h| h.mse),
        historical_in_sample: historical.as_ref().is_some_and(|h| h.in_sample),
        forecasts: task
            .horizons
            .iter()
            .map(|&h| {
                let (mse, count) = forecast.mse_at(h);
                HorizonMse {
                    horizon: h,
                    mse,
                    count,
                }
            })
            .collect(),
        origins: forecast.attempted,
        excluded_origins: forecast.excluded,
        excluded_windows: slots.iter().filter(|s| s.trained.is_err()).count(),
    };
    Ok(BackendResult {
        row,
        forecast,
        historical,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every backend on one dataset and appends the rows to `report`.
pub fn benchmark_dataset(
    report: &mut MseReport,
    ts: &TimeSeries,
    backends: &[Backend],
    template: &ForecastTask,
) -> Result<Vec<BackendResult>> {
    let mut out = Vec::with_capacity(backends.len());
    for &b in backends {
        let task = ForecastTask {
            backend: b,
            ..template.clone()
        };
        out.push(evaluate_backend(&task, ts)?);
    }
    report.datasets.push(DatasetMeta {
        name: ts.name.clone(),
        n: ts.len(),
        windowing: template.windowing,
    });
    report.rows.extend(out.iter().map(|r| r.row.clone()));
    Ok(out)
}

/// Per-point CSV: `t,mean_sigma,var_sigma,lo95,hi95,reference` where
/// `reference` is the reference variance.
pub fn write_points_csv<W: Write>(
    w: W,
    times: &[f64],
    summaries: &[SigmaSummary],
    reference: &[f64],
) -> Result<()> {
    check_len(times.len(), summaries.len())?;
    check_len(times.len(), reference.len())?;
    let mut out = csv::Writer::from_writer(w);
    let e = |e: csv::Error| Error::InvalidParameter(format!("csv write: {e}"));
    out.write_record(["t", "mean_sigma", "var_sigma", "lo95", "hi95", "reference"])
        .map_err(e)?;
    for ((t, s), r) in times.iter().zip(summaries).zip(reference) {
        out.write_record(
            [t, &s.mean_sigma, &s.var_sigma, &s.lo95, &s.hi95, r].map(|v| v.to_string()),
        )
        .map_err(e)?;
    }
    out.flush()
        .map_err(|e| Error::InvalidParameter(format!("csv write: {e}")))
}

/// A row of forecasts from one origin: predicted variance per horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub origin_t: f64,
    pub values: Vec<SigmaSummary>,
}

/// Wide forecast CSV: `t,h1,h7,...` with the predicted variance at each
/// horizon from the origin at time `t`.
pub fn write_forecast_csv<W: Write>(w: W, horizons: &[usize], rows: &[ForecastRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let e = |e: csv::Error| Error::InvalidParameter(format!("csv write: {e}"));
    let mut header = vec!["t".to_string()];
    header.extend(horizons.iter().map(|h| format!("h{h}")));
    out.write_record(&header).map_err(e)?;
    for r in rows {
        check_len(horizons.len(), r.values.len())?;
        let mut rec = vec![r.origin_t.to_string()];
        rec.extend(r.values.iter().map(|s| s.mean_var.to_string()));
        out.write_record(&rec).map_err(e)?;
    }
    out.flush()
        .map_err(|e| Error::InvalidParameter(format!("csv write: {e}")))
}

/// Forecasts from every prefix of `ts` with fixed hyperparameters. Targets
/// past the end of the series are placed on the series' typical spacing.
pub fn forecast_series(
    backend: Backend,
    trained: &Trained,
    ts: &TimeSeries,
    task: &ForecastTask,
    min_history: usize,
) -> Result<Vec<ForecastRow>> {
    task.validate()?;
    let n = ts.len();
    let min_history = min_history.max(1);
    if min_history > n {
        return Err(Error::WindowTooLarge {
            window: min_history,
            len: n,
        });
    }
    let dt = ts.typical_step();
    (min_history..=n)
        .into_par_iter()
        .map(|m| {
            let last = ts.times[m - 1];
            let targets: Vec<Target> = task
                .horizons
                .iter()
                .map(|&h| Target {
                    t: if m - 1 + h < n {
                        ts.times[m - 1 + h]
                    } else {
                        ts.times[n - 1] + (m + h - n) as f64 * dt
                    },
                    steps: h,
                })
                .collect();
            let mut rng = stream(task.seed, m as u64);
            let values = forecast_sigma(
                backend,
                trained,
                &ts.times[..m],
                &ts.values[..m],
                &targets,
                task,
                &mut rng,
            )?;
            Ok(ForecastRow {
                origin_t: last,
                values,
            })
        })
        .collect()
}

/// Convenience for tests and callers holding a raw latent vector.
pub fn summarize_latent(
    mean: &DVector<f64>,
    variance: &DVector<f64>,
    warp: &WarpKind,
    draws: usize,
    rng: &mut ChainRng,
) -> Vec<SigmaSummary> {
    mean.iter()
        .zip(variance.iter())
        .map(|(&m, &v)| {
            summarize_gaussian(
                &PredictiveGaussian {
                    mean: m,
                    variance: v,
                    clamped: false,
                },
                warp,
                draws,
                rng,
            )
        })
        .collect()
}
