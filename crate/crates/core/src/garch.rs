//! GARCH(1,1) with Gaussian innovations: the comparison baseline.
//!
//! `sigma2[t] = omega + alpha * y[t-1]^2 + beta * sigma2[t-1]`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::warp::logistic;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Fitted parameters satisfy `alpha + beta <= 1 - PERSISTENCE_MARGIN`.
pub const PERSISTENCE_MARGIN: f64 = 1e-6;
pub const MIN_FIT_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchParams {
    pub fn new(omega: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = GarchParams { omega, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let GarchParams { omega, alpha, beta } = *self;
        if !(omega > 0.0 && alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0)
            || !(omega.is_finite() && alpha.is_finite() && beta.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "garch parameters need omega > 0, alpha, beta >= 0, alpha + beta < 1 \
                 (got {omega}, {alpha}, {beta})"
            )));
        }
        Ok(())
    }

    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.persistence())
    }

    fn to_unconstrained(self) -> [f64; 3] {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let persistence = self.persistence() / (1.0 - PERSISTENCE_MARGIN);
        let share = if self.persistence() > 0.0 {
            self.alpha / self.persistence()
        } else {
            0.5
        };
        [
            self.omega.ln(),
            logit(persistence.clamp(1e-12, 1.0 - 1e-12)),
            logit(share.clamp(1e-12, 1.0 - 1e-12)),
        ]
    }

    fn from_unconstrained(x: &[f64]) -> Self {
        let persistence = (1.0 - PERSISTENCE_MARGIN) * logistic(x[1]);
        let alpha = persistence * logistic(x[2]);
        GarchParams {
            omega: x[0].exp(),
            alpha,
            beta: persistence - alpha,
        }
    }
}

/// Conditional variances starting from `sigma0sq`, and the Gaussian log
/// likelihood of `y` under them.
pub fn garch_filter(params: &GarchParams, y: &[f64], sigma0sq: f64) -> (Vec<f64>, f64) {
    let mut var = Vec::with_capacity(y.len());
    let mut loglik = 0.0;
    let mut s2 = sigma0sq;
    for (t, &yt) in y.iter().enumerate() {
        if t > 0 {
            s2 = params.omega + params.alpha * y[t - 1] * y[t - 1] + params.beta * s2;
        }
        var.push(s2);
        loglik -= 0.5 * (LN_2PI + s2.ln() + yt * yt / s2);
    }
    (var, loglik)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: GarchParams,
    pub sigma0sq: f64,
    pub log_likelihood: f64,
    pub initial_log_likelihood: f64,
    pub evaluations: usize,
}

impl GarchFit {
    /// Conditional variances over the training data.
    pub fn filtered(&self, y: &[f64]) -> Vec<f64> {
        garch_filter(&self.params, y, self.sigma0sq).0
    }

    /// Variance `h` steps past the end of `y`.
    pub fn forecast(&self, y: &[f64], h: usize) -> f64 {
        let var = self.filtered(y);
        garch_forecast(&self.params, y, *var.last().unwrap_or(&self.sigma0sq), h)
    }
}

fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Maximum likelihood fit over the stationary region.
pub fn garch_fit(y: &[f64]) -> Result<GarchFit> {
    if y.len() < MIN_FIT_LEN {
        return Err(Error::FitFailure(format!(
            "need at least {MIN_FIT_LEN} observations, got {}",
            y.len()
        )));
    }
    let sigma0sq = sample_variance(y);
    if !(sigma0sq > 0.0 && sigma0sq.is_finite()) {
        return Err(Error::FitFailure(format!(
            "sample variance {sigma0sq} is not positive"
        )));
    }
    let init = GarchParams {
        omega: 0.1 * sigma0sq,
        alpha: 0.05,
        beta: 0.9,
    };
    let (_, init_ll) = garch_filter(&init, y, sigma0sq);
    if !init_ll.is_finite() {
        return Err(Error::FitFailure(
            "log likelihood at initialization is not finite".into(),
        ));
    }
    let min = nelder_mead(
        |x| -garch_filter(&GarchParams::from_unconstrained(x), y, sigma0sq).1,
        &init.to_unconstrained(),
        &NelderMeadOptions::default(),
    );
    let params = GarchParams::from_unconstrained(&min.x);
    let ll = -min.value;
    if !ll.is_finite() || ll < init_ll || params.validate().is_err() {
        return Err(Error::FitFailure(format!(
            "optimizer did not improve on initialization (init {init_ll}, final {ll})"
        )));
    }
    Ok(GarchFit {
        params,
        sigma0sq,
        log_likelihood: ll,
        initial_log_likelihood: init_ll,
        evaluations: min.evaluations,
    })
}

/// `h`-step-ahead conditional variance given the last observation of `y` and
/// its conditional variance `sigma_n_sq`. Returns the variance at the
/// horizon, not accumulated over it.
pub fn garch_forecast(params: &GarchParams, y: &[f64], sigma_n_sq: f64, h: usize) -> f64 {
    assert!(h >= 1, "forecast horizon must be at least 1");
    let last = y.last().copied().unwrap_or(0.0);
    let mut s2 = params.omega + params.alpha * last * last + params.beta * sigma_n_sq;
    let persistence = params.persistence();
    for _ in 1..h {
        s2 = params.omega + persistence * s2;
    }
    s2
}

/// A path of length `n` started at the unconditional variance.
/// Returns `(y, sigma2)`.
pub fn simulate<R: Rng + ?Sized>(
    params: &GarchParams,
    n: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let mut y = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    let mut s2 = params.unconditional_variance();
    for t in 0..n {
        if t > 0 {
            let prev: f64 = y[t - 1];
            s2 = params.omega + params.alpha * prev * prev + params.beta * s2;
        }
        var.push(s2);
        y.push(s2.sqrt() * rng.sample::<f64, _>(StandardNormal));
    }
    (y, var)
}
