//! Covariance functions for the latent GP prior over `f`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative diagonal jitter: `jitter = DEFAULT_JITTER * amplitude`.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// A stationary covariance over scalar inputs.
///
/// Implementors only need `eval` and the parameter accessors; matrix and
/// cross-covariance assembly are shared.
pub trait Covariance {
    fn eval(&self, s: f64, t: f64) -> f64;

    /// Prior variance `k(t, t)`.
    fn variance(&self) -> f64;

    /// Hyperparameters in log space, in a fixed per-family order.
    fn log_params(&self) -> Vec<f64>;

    fn matrix(&self, times: &[f64], jitter: f64) -> Result<DMatrix<f64>> {
        let k = self.matrix_unchecked(times, jitter);
        factor(k.clone())?;
        Ok(k)
    }

    /// Like [`Covariance::matrix`] but skips the factorization check.
    fn matrix_unchecked(&self, times: &[f64], jitter: f64) -> DMatrix<f64> {
        let n = times.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = self.eval(times[i], times[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(j, j)] += jitter;
        }
        k
    }

    fn cross(&self, times: &[f64], tstar: f64) -> DVector<f64> {
        DVector::from_iterator(times.len(), times.iter().map(|&t| self.eval(tstar, t)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
}

/// `k(t, t') = A exp(-(t - t')^2 / l^2)` for the squared-exponential family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub amplitude: f64,
    pub lengthscale: f64,
}

impl KernelSpec {
    pub fn squared_exponential(amplitude: f64, lengthscale: f64) -> Result<Self> {
        let spec = KernelSpec {
            family: KernelFamily::SquaredExponential,
            amplitude,
            lengthscale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.amplitude) || !ok(self.lengthscale) {
            return Err(Error::InvalidParameter(format!(
                "kernel amplitude and lengthscale must be positive and finite (A={}, l={})",
                self.amplitude, self.lengthscale
            )));
        }
        Ok(())
    }

    pub fn default_jitter(&self) -> f64 {
        DEFAULT_JITTER * self.amplitude
    }
}

impl Covariance for KernelSpec {
    fn eval(&self, s: f64, t: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                let r = (s - t) / self.lengthscale;
                self.amplitude * (-r * r).exp()
            }
        }
    }

    fn variance(&self) -> f64 {
        self.amplitude
    }

    fn log_params(&self) -> Vec<f64> {
        vec![self.amplitude.ln(), self.lengthscale.ln()]
    }
}

pub fn kernel_eval(spec: &KernelSpec, s: f64, t: f64) -> f64 {
    spec.eval(s, t)
}

pub fn kernel_matrix(spec: &KernelSpec, times: &[f64], jitter: f64) -> Result<DMatrix<f64>> {
    if jitter < 0.0 || !jitter.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "jitter must be >= 0, got {jitter}"
        )));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite time {t}")));
    }
    spec.matrix(times, jitter)
}

pub fn cross_covariance(spec: &KernelSpec, times: &[f64], tstar: f64) -> DVector<f64> {
    spec.cross(times, tstar)
}

/// Cholesky factor of a symmetric matrix, mapping failure to [`Error::CholeskyFailure`].
pub fn factor(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    Cholesky::new(m).ok_or_else(|| {
        Error::CholeskyFailure(format!(
            "{n}x{n} matrix is not numerically positive definite"
        ))
    })
}
