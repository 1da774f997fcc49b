//! Hyperparameter learning by maximizing the Laplace approximate log
//! marginal likelihood.
//!
//! The optimizer is Polak–Ribière nonlinear conjugate gradient on the
//! negated objective with central finite-difference gradients. Every
//! objective evaluation warm-starts Newton from the mode at the current
//! iterate.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Covariance, KernelSpec};
use crate::laplace::{find_mode_from, LaplaceFit, NewtonOptions};
use crate::likelihood::GcpvLikelihood;
use crate::warp::{floor_from_observations, SoftplusComponent, WarpKind, WarpParams};

/// Objective value reported when the inner Newton iteration fails.
pub const SENTINEL: f64 = -1e300;

/// Lengthscale multipliers for the multistart runs.
pub const MULTISTART_SCALES: [f64; 3] = [0.3, 1.0, 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Learned softplus warp, squared-exponential kernel with `A = 1`.
    #[serde(rename = "gcpv")]
    Gcpv,
    /// Warp `e^x` with a trainable amplitude.
    #[serde(rename = "gp-exp")]
    GpExp,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gcpv" => Ok(ModelKind::Gcpv),
            "gp-exp" => Ok(ModelKind::GpExp),
            other => Err(format!("unknown model '{other}' (expected gcpv or gp-exp)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Gcpv => "gcpv",
            ModelKind::GpExp => "gp-exp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Number of softplus terms in the warp. Ignored for `GpExp`.
    pub components: usize,
}

impl ModelConfig {
    pub fn gcpv() -> Self {
        ModelConfig {
            kind: ModelKind::Gcpv,
            components: 1,
        }
    }

    pub fn gp_exp() -> Self {
        ModelConfig {
            kind: ModelKind::GpExp,
            components: 0,
        }
    }

    pub fn of(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Gcpv => Self::gcpv(),
            ModelKind::GpExp => Self::gp_exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    LogLengthscale,
    LogAmplitude,
    LogA(usize),
    LogB(usize),
    C(usize),
}

/// Flat optimizer coordinates plus what each one means.
///
/// Positive parameters are stored as logs. Quantities that are not trained
/// (the warp floor, a fixed amplitude) ride along so that unpacking needs
/// nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperVector {
    pub values: Vec<f64>,
    pub schema: Vec<Slot>,
    pub fixed_amplitude: f64,
    /// `None` selects the exponential warp.
    pub floor: Option<f64>,
}

impl HyperVector {
    pub fn pack(kernel: &KernelSpec, warp: &WarpKind, train_amplitude: bool) -> Result<Self> {
        kernel.validate()?;
        warp.validate()?;
        let mut values = vec![kernel.lengthscale.ln()];
        let mut schema = vec![Slot::LogLengthscale];
        if train_amplitude {
            values.push(kernel.amplitude.ln());
            schema.push(Slot::LogAmplitude);
        }
        let floor = match warp {
            WarpKind::Parametric(p) => {
                for (j, c) in p.components.iter().enumerate() {
                    values.extend([c.a.ln(), c.b.ln(), c.c]);
                    schema.extend([Slot::LogA(j), Slot::LogB(j), Slot::C(j)]);
                }
                Some(p.floor)
            }
            WarpKind::Exponential => None,
        };
        Ok(HyperVector {
            values,
            schema,
            fixed_amplitude: kernel.amplitude,
            floor,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        HyperVector {
            values,
            ..self.clone()
        }
    }

    pub fn unpack(&self) -> Result<(KernelSpec, WarpKind)> {
        crate::error::check_len(self.schema.len(), self.values.len())?;
        let mut lengthscale = f64::NAN;
        let mut amplitude = self.fixed_amplitude;
        let n_comp = self
            .schema
            .iter()
            .filter_map(|s| match s {
                Slot::LogA(j) => Some(j + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut comps = vec![
            SoftplusComponent {
                a: f64::NAN,
                b: f64::NAN,
                c: f64::NAN
            };
            n_comp
        ];
        for (slot, &v) in self.schema.iter().zip(&self.values) {
            match *slot {
                Slot::LogLengthscale => lengthscale = v.exp(),
                Slot::LogAmplitude => amplitude = v.exp(),
                Slot::LogA(j) => comps[j].a = v.exp(),
                Slot::LogB(j) => comps[j].b = v.exp(),
                Slot::C(j) => comps[j].c = v,
            }
        }
        let kernel = KernelSpec::squared_exponential(amplitude, lengthscale)?;
        let warp = match self.floor {
            Some(floor) => WarpKind::Parametric(WarpParams::new(comps, floor)?),
            None => WarpKind::Exponential,
        };
        Ok((kernel, warp))
    }

    pub fn lengthscale(&self) -> f64 {
        self.schema
            .iter()
            .position(|s| *s == Slot::LogLengthscale)
            .map_or(f64::NAN, |i| self.values[i].exp())
    }

    pub fn scale_lengthscale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        if let Some(i) = self.schema.iter().position(|s| *s == Slot::LogLengthscale) {
            out.values[i] += factor.ln();
        }
        out
    }
}

/// Default starting point: `l = (t_max - t_min) / 10`, `A = 1`, and the
/// data-scaled warp.
pub fn initial_hypers(t: &[f64], y: &[f64], config: &ModelConfig) -> Result<HyperVector> {
    crate::error::check_len(t.len(), y.len())?;
    if t.len() < 2 {
        return Err(Error::InvalidParameter(
            "training needs at least 2 observations".into(),
        ));
    }
    let span = t[t.len() - 1] - t[0];
    let lengthscale = if span > 0.0 { span / 10.0 } else { 1.0 };
    let kernel = KernelSpec::squared_exponential(1.0, lengthscale)?;
    match config.kind {
        ModelKind::Gcpv => {
            let mut w = WarpParams::initial_for(y)?;
            let base = w.components[0];
            let k = config.components.max(1);
            // spread extra components over shifted offsets with a shared total scale
            w.components = (0..k)
                .map(|j| SoftplusComponent {
                    a: base.a / k as f64,
                    b: base.b,
                    c: j as f64 - (k as f64 - 1.0) / 2.0,
                })
                .collect();
            HyperVector::pack(&kernel, &WarpKind::Parametric(w), false)
        }
        ModelKind::GpExp => {
            if floor_from_observations(y).is_err() {
                return Err(Error::DegenerateData("all observations are zero".into()));
            }
            HyperVector::pack(&kernel, &WarpKind::Exponential, true)
        }
    }
}

/// Newton settings used inside the optimizer. Tighter than the defaults so
/// that finite differences of the objective are not swamped by mode error.
pub fn training_newton_options() -> NewtonOptions {
    NewtonOptions {
        tol: 1e-10,
        grad_tol: 1e-9,
        max_iterations: 200,
        max_halvings: 30,
    }
}

/// The Laplace objective as a function of `z` for fixed data.
pub struct Objective<'a> {
    pub t: &'a [f64],
    pub y: &'a [f64],
    pub newton: NewtonOptions,
}

impl<'a> Objective<'a> {
    pub fn new(t: &'a [f64], y: &'a [f64]) -> Self {
        Objective {
            t,
            y,
            newton: training_newton_options(),
        }
    }

    pub fn covariance(&self, kernel: &KernelSpec) -> DMatrix<f64> {
        kernel.matrix_unchecked(self.t, kernel.default_jitter())
    }

    /// Log marginal at `z` with its fit, warm-started from `warm` when given.
    pub fn fit(&self, z: &HyperVector, warm: Option<&DVector<f64>>) -> Result<(f64, LaplaceFit)> {
        let (kernel, warp) = z.unpack()?;
        let k = self.covariance(&kernel);
        let lik = GcpvLikelihood::new(warp);
        let fit = find_mode_from(&k, self.y, &lik, &self.newton, warm)?;
        let lm = fit.log_marginal;
        if !lm.is_finite() {
            return Err(Error::InvalidParameter("log marginal is not finite".into()));
        }
        Ok((lm, fit))
    }

    /// Log marginal at `z`, or [`SENTINEL`] if anything fails.
    pub fn value(&self, z: &HyperVector, warm: Option<&DVector<f64>>) -> f64 {
        self.fit(z, warm).map_or(SENTINEL, |(v, _)| v)
    }
}

/// Convenience wrapper: the objective at `z` from a cold start.
pub fn objective(z: &HyperVector, t: &[f64], y: &[f64]) -> f64 {
    Objective::new(t, y).value(z, None)
}

#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub max_iterations: usize,
    /// Stop when an iteration improves the objective by less than this,
    /// relative to `max(1, |objective|)`.
    pub rel_tol: f64,
    pub grad_tol: f64,
    /// Central-difference step per coordinate.
    pub fd_step: f64,
    pub multistart: bool,
    pub max_halvings: usize,
    pub max_expansions: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            max_iterations: 200,
            rel_tol: 1e-6,
            grad_tol: 1e-4,
            fd_step: 1e-4,
            multistart: true,
            max_halvings: 30,
            max_expansions: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    SmallChange,
    SmallGradient,
    LineSearchFailed,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub z: HyperVector,
    pub fit: LaplaceFit,
    pub objective: f64,
    pub initial_objective: f64,
    /// Objective at the start and after every accepted iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
}

impl TrainResult {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::MaxIterations && self.fit.converged
    }
}

/// Maximizes the Laplace log marginal over `z`.
///
/// With `opts.multistart` the search is repeated from lengthscales scaled by
/// [`MULTISTART_SCALES`] and the best end point wins.
pub fn optimize(
    t: &[f64],
    y: &[f64],
    config: &ModelConfig,
    init: &HyperVector,
    opts: &OptimizeOptions,
) -> Result<TrainResult> {
    crate::error::check_len(t.len(), y.len())?;
    if t.len() < 2 {
        return Err(Error::InvalidParameter(
            "training needs at least 2 observations".into(),
        ));
    }
    if y.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateData("all observations are zero".into()));
    }
    if config.kind == ModelKind::GpExp && init.floor.is_some() {
        return Err(Error::InvalidParameter(
            "gp-exp model takes no warp parameters".into(),
        ));
    }
    let starts: Vec<HyperVector> = if opts.multistart {
        MULTISTART_SCALES
            .iter()
            .map(|&s| init.scale_lengthscale(s))
            .collect()
    } else {
        vec![init.clone()]
    };
    let runs: Vec<Result<TrainResult>> = starts
        .par_iter()
        .map(|z0| conjugate_gradient(&Objective::new(t, y), z0, opts))
        .collect();
    let mut best: Option<TrainResult> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.objective > b.objective) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(Error::NotConverged))
}

/// Initialization followed by [`optimize`].
pub fn train(
    t: &[f64],
    y: &[f64],
    config: &ModelConfig,
    opts: &OptimizeOptions,
) -> Result<TrainResult> {
    let init = initial_hypers(t, y, config)?;
    optimize(t, y, config, &init, opts)
}

struct Point {
    x: Vec<f64>,
    value: f64,
    fit: LaplaceFit,
}

fn conjugate_gradient(
    obj: &Objective<'_>,
    z0: &HyperVector,
    opts: &OptimizeOptions,
) -> Result<TrainResult> {
    let mut evaluations = 0;
    let mut eval = |x: &[f64], warm: Option<&DVector<f64>>| -> Option<(f64, LaplaceFit)> {
        evaluations += 1;
        obj.fit(&z0.with_values(x.to_vec()), warm).ok()
    };

    let (v0, fit0) = eval(&z0.values, None).ok_or(Error::FitFailure(
        "laplace fit failed at the initial hyperparameters".into(),
    ))?;
    let mut cur = Point {
        x: z0.values.clone(),
        value: v0,
        fit: fit0,
    };
    let initial_objective = v0;
    let mut trace = vec![v0];
    let dim = cur.x.len();
    let h = opts.fd_step;

    // ascent direction for the objective (descent for its negation)
    let gradient =
        |p: &Point,
         eval: &mut dyn FnMut(&[f64], Option<&DVector<f64>>) -> Option<(f64, LaplaceFit)>| {
            (0..dim)
                .map(|i| {
                    let mut xp = p.x.clone();
                    let mut xm = p.x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let vp = eval(&xp, Some(&p.fit.a_fhat)).map_or(SENTINEL, |r| r.0);
                    let vm = eval(&xm, Some(&p.fit.a_fhat)).map_or(SENTINEL, |r| r.0);
                    if vp == SENTINEL || vm == SENTINEL {
                        // one-sided difference away from the failing side
                        if vp != SENTINEL {
                            (vp - p.value) / h
                        } else if vm != SENTINEL {
                            (p.value - vm) / h
                        } else {
                            0.0
                        }
                    } else {
                        (vp - vm) / (2.0 * h)
                    }
                })
                .collect::<Vec<f64>>()
        };

    let mut g = gradient(&cur, &mut eval);
    let mut d = g.clone();
    let mut step = 1.0 / norm_inf(&d).max(1.0);
    let mut iterations = 0;
    let mut since_restart = 0;
    let stop;

    loop {
        if norm2(&g) < opts.grad_tol {
            stop = StopReason::SmallGradient;
            break;
        }
        if iterations >= opts.max_iterations {
            stop = StopReason::MaxIterations;
            break;
        }
        if dot(&d, &g) <= 0.0 || since_restart >= dim {
            d = g.clone();
            since_restart = 0;
        }
        iterations += 1;

        let Some(next) = line_search(&cur, &d, step, opts, &mut eval) else {
            if since_restart > 0 {
                // retry once along the gradient before giving up
                d = g.clone();
                since_restart = 0;
                continue;
            }
            stop = StopReason::LineSearchFailed;
            break;
        };
        let (alpha, p) = next;
        let change = p.value - cur.value;
        step = alpha;
        cur = p;
        trace.push(cur.value);
        if change < opts.rel_tol * cur.value.abs().max(1.0) {
            stop = StopReason::SmallChange;
            break;
        }

        let g_new = gradient(&cur, &mut eval);
        let denom = dot(&g, &g);
        let beta = if denom > 0.0 {
            (g_new.iter().zip(&g).map(|(a, b)| a * (a - b)).sum::<f64>() / denom).max(0.0)
        } else {
            0.0
        };
        d = g_new
            .iter()
            .zip(&d)
            .map(|(gi, di)| gi + beta * di)
            .collect();
        g = g_new;
        since_restart += 1;
    }

    Ok(TrainResult {
        z: z0.with_values(cur.x),
        objective: cur.value,
        fit: cur.fit,
        initial_objective,
        trace,
        iterations,
        evaluations,
        stop,
    })
}

/// Finds a step along `d` that increases the objective: halve until an
/// increase is found, double while it keeps increasing, then refine with a
/// parabola through the last three points.
fn line_search(
    cur: &Point,
    d: &[f64],
    initial: f64,
    opts: &OptimizeOptions,
    eval: &mut dyn FnMut(&[f64], Option<&DVector<f64>>) -> Option<(f64, LaplaceFit)>,
) -> Option<(f64, Point)> {
    let at =
        |alpha: f64| -> Vec<f64> { cur.x.iter().zip(d).map(|(x, di)| x + alpha * di).collect() };
    let try_step =
        |alpha: f64,
         eval: &mut dyn FnMut(&[f64], Option<&DVector<f64>>) -> Option<(f64, LaplaceFit)>| {
            let x = at(alpha);
            eval(&x, Some(&cur.fit.a_fhat)).map(|(value, fit)| Point { x, value, fit })
        };

    let mut alpha = initial;
    let mut best: Option<(f64, Point)> = None;
    for _ in 0..=opts.max_halvings {
        if let Some(p) = try_step(alpha, eval) {
            if p.value > cur.value {
                best = Some((alpha, p));
                break;
            }
        }
        alpha *= 0.5;
    }
    let (mut a1, mut p1) = best?;

    // expand
    let mut a0 = 0.0;
    let mut v0 = cur.value;
    let mut upper: Option<(f64, f64)> = None;
    for _ in 0..opts.max_expansions {
        let a2 = 2.0 * a1;
        match try_step(a2, eval) {
            Some(p2) if p2.value > p1.value => {
                a0 = a1;
                v0 = p1.value;
                a1 = a2;
                p1 = p2;
            }
            Some(p2) => {
                upper = Some((a2, p2.value));
                break;
            }
            None => {
                upper = Some((a2, SENTINEL));
                break;
            }
        }
    }

    // parabolic refinement on (a0, a1, a2) when bracketed
    if let Some((a2, v2)) = upper {
        if v2 > SENTINEL {
            let v1 = p1.value;
            let num = (a1 - a0).powi(2) * (v1 - v2) - (a1 - a2).powi(2) * (v1 - v0);
            let den = (a1 - a0) * (v1 - v2) - (a1 - a2) * (v1 - v0);
            if den.abs() > 0.0 {
                let a_star = a1 - 0.5 * num / den;
                if a_star > a0 && a_star < a2 && (a_star - a1).abs() > 1e-12 * a1 {
                    if let Some(p) = try_step(a_star, eval) {
                        if p.value > p1.value {
                            return Some((a_star, p));
                        }
                    }
                }
            }
        }
    }
    Some((a1, p1))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainWindow {
    pub start: usize,
    pub end: usize,
    pub t_start: f64,
    pub t_end: f64,
}

/// A trained model as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: ModelKind,
    pub kernel: KernelSpec,
    pub warp: WarpKind,
    pub train_window: TrainWindow,
    pub log_marginal: f64,
    pub converged: bool,
    #[serde(default)]
    pub iterations: usize,
}

impl TrainedModel {
    pub fn from_result(kind: ModelKind, t: &[f64], res: &TrainResult) -> Result<Self> {
        let (kernel, warp) = res.z.unpack()?;
        Ok(TrainedModel {
            model: kind,
            kernel,
            warp,
            train_window: TrainWindow {
                start: 0,
                end: t.len(),
                t_start: t.first().copied().unwrap_or(f64::NAN),
                t_end: t.last().copied().unwrap_or(f64::NAN),
            },
            log_marginal: res.objective,
            converged: res.converged(),
            iterations: res.iterations,
        })
    }

    pub fn hypers(&self) -> Result<HyperVector> {
        HyperVector::pack(&self.kernel, &self.warp, self.model == ModelKind::GpExp)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(s)?;
        m.kernel.validate()?;
        m.warp.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::simulate_trig;
    use proptest::prelude::*;

    fn trig_prefix(n: usize) -> (Vec<f64>, Vec<f64>) {
        let ts = simulate_trig(11);
        (ts.times[..n].to_vec(), ts.values[..n].to_vec())
    }

    #[test]
    fn gp_exp_has_two_coordinates() {
        let (t, y) = trig_prefix(50);
        let z = initial_hypers(&t, &y, &ModelConfig::gp_exp()).unwrap();
        assert_eq!(z.schema, vec![Slot::LogLengthscale, Slot::LogAmplitude]);
        let z = initial_hypers(&t, &y, &ModelConfig::gcpv()).unwrap();
        assert_eq!(z.len(), 4);
        let (k, w) = z.unpack().unwrap();
        assert_eq!(k.amplitude, 1.0);
        assert!((k.lengthscale - (t[49] - t[0]) / 10.0).abs() < 1e-12);
        assert!(matches!(w, WarpKind::Parametric(_)));
    }

    #[test]
    fn all_zero_data_is_degenerate() {
        let t = [0.0, 1.0, 2.0];
        let y = [0.0; 3];
        assert!(matches!(
            initial_hypers(&t, &y, &ModelConfig::gcpv()),
            Err(Error::DegenerateData(_))
        ));
        let z = initial_hypers(&t, &[1.0, 0.5, 0.2], &ModelConfig::gcpv()).unwrap();
        assert!(matches!(
            optimize(
                &t,
                &y,
                &ModelConfig::gcpv(),
                &z,
                &OptimizeOptions::default()
            ),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn objective_is_smooth_in_lengthscale() {
        let (t, y) = trig_prefix(201);
        let z = initial_hypers(&t, &y, &ModelConfig::gcpv()).unwrap();
        let obj = Objective::new(&t, &y);
        let v0 = obj.value(&z, None);
        let mut zp = z.clone();
        zp.values[0] += 1e-6;
        let mut zm = z.clone();
        zm.values[0] -= 1e-6;
        let (vp, vm) = (obj.value(&zp, None), obj.value(&zm, None));
        assert!(v0 > SENTINEL && vp > SENTINEL && vm > SENTINEL);
        assert!((vp - v0).abs() < 1e-3 && (vm - v0).abs() < 1e-3);
        // second difference small relative to first: no kinks
        assert!((vp - 2.0 * v0 + vm).abs() < 1e-6);
    }

    #[test]
    fn training_improves_and_is_monotone() {
        let (t, y) = trig_prefix(201);
        let res = train(&t, &y, &ModelConfig::gcpv(), &OptimizeOptions::default()).unwrap();
        let init = objective(
            &initial_hypers(&t, &y, &ModelConfig::gcpv()).unwrap(),
            &t,
            &y,
        );
        assert!(res.objective > init);
        assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(res.converged());
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let (t, y) = trig_prefix(80);
        let opts = OptimizeOptions {
            multistart: false,
            ..Default::default()
        };
        let first = train(&t, &y, &ModelConfig::gcpv(), &opts).unwrap();
        let again = optimize(&t, &y, &ModelConfig::gcpv(), &first.z, &opts).unwrap();
        assert!(again.iterations <= 1, "{} iterations", again.iterations);
        assert!((again.objective - first.objective).abs() <= 1e-6 * first.objective.abs().max(1.0));
    }

    #[test]
    fn deterministic() {
        let (t, y) = trig_prefix(60);
        let a = train(&t, &y, &ModelConfig::gp_exp(), &OptimizeOptions::default()).unwrap();
        let b = train(&t, &y, &ModelConfig::gp_exp(), &OptimizeOptions::default()).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn model_json_shape() {
        let (t, y) = trig_prefix(40);
        let opts = OptimizeOptions {
            multistart: false,
            ..Default::default()
        };
        let res = train(&t, &y, &ModelConfig::gp_exp(), &opts).unwrap();
        let m = TrainedModel::from_result(ModelKind::GpExp, &t, &res).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["model"], "gp-exp");
        assert_eq!(v["warp"]["kind"], "exponential");
        assert!(v["warp"].get("components").is_none());
        assert_eq!(TrainedModel::from_json(&m.to_json().unwrap()).unwrap(), m);
        assert_eq!(m.hypers().unwrap().values, res.z.values);
    }

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(
            ll in -3.0..3.0f64, la in -2.0..2.0f64,
            comps in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -3.0..3.0f64), 0..3),
            floor in 0.0..0.5f64, train_amp in any::<bool>(),
        ) {
            let kernel = KernelSpec::squared_exponential(la.exp(), ll.exp()).unwrap();
            let warp = if comps.is_empty() {
                WarpKind::Exponential
            } else {
                WarpKind::Parametric(WarpParams::new(
                    comps.iter().map(|&(a, b, c)| SoftplusComponent { a: a.exp(), b: b.exp(), c }).collect(),
                    floor,
                ).unwrap())
            };
            let z = HyperVector::pack(&kernel, &warp, train_amp).unwrap();
            prop_assert_eq!(z.schema.len(), z.values.len());
            let (k2, w2) = z.unpack().unwrap();
            let z2 = HyperVector::pack(&k2, &w2, train_amp).unwrap();
            prop_assert_eq!(&z2, &z);
            prop_assert!((k2.lengthscale / kernel.lengthscale - 1.0).abs() < 1e-14);
            prop_assert!((k2.amplitude / kernel.amplitude - 1.0).abs() < 1e-14);
        }
    }
}
