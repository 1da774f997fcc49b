//! Observation models `p(y | f)` with analytic derivatives in `f`.

use std::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::warp::WarpKind;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodEval {
    /// `log p(y | f)` in nats.
    pub value: f64,
    /// `d log p / d f_i`.
    pub grad: Vec<f64>,
    /// `W_ii = -d^2 log p / d f_i^2`. Entries may be negative.
    pub neg_hess_diag: Vec<f64>,
}

/// A factorized likelihood: each `y_i` depends on `f_i` only, so the Hessian
/// is diagonal.
pub trait LikelihoodModel: Sync {
    fn evaluate(&self, y: &[f64], f: &[f64]) -> Result<LikelihoodEval>;

    /// `log p(y | f)` alone.
    fn log_likelihood(&self, y: &[f64], f: &[f64]) -> Result<f64> {
        self.evaluate(y, f).map(|e| e.value)
    }
}

/// `y_i ~ N(0, g(f_i)^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcpvLikelihood {
    pub warp: WarpKind,
}

impl GcpvLikelihood {
    pub fn new(warp: WarpKind) -> Self {
        GcpvLikelihood { warp }
    }

    fn point(&self, y: f64, f: f64) -> (f64, f64, f64) {
        let y2 = y * y;
        match &self.warp {
            // log g = f, so use the closed form directly to avoid overflow in g^2.
            WarpKind::Exponential => {
                let e = y2 * (-2.0 * f).exp();
                let value = -HALF_LN_2PI - f - 0.5 * e;
                (value, e - 1.0, 2.0 * e)
            }
            WarpKind::Parametric(_) => {
                let jet = self.warp.jet(f);
                let g = jet.value;
                let g2 = g * g;
                let value = -HALF_LN_2PI - g.ln() - y2 / (2.0 * g2);
                // d/dg of the point log density, and its second derivative
                let dg = (y2 - g2) / (g2 * g);
                let d2g = 1.0 / g2 - 3.0 * y2 / (g2 * g2);
                let grad = jet.deriv * dg;
                let hess = jet.curvature * dg + jet.deriv * jet.deriv * d2g;
                (value, grad, -hess)
            }
        }
    }
}

impl LikelihoodModel for GcpvLikelihood {
    fn evaluate(&self, y: &[f64], f: &[f64]) -> Result<LikelihoodEval> {
        check_len(y.len(), f.len())?;
        let mut value = 0.0;
        let mut grad = Vec::with_capacity(f.len());
        let mut w = Vec::with_capacity(f.len());
        for (&yi, &fi) in y.iter().zip(f) {
            let (v, g, h) = self.point(yi, fi);
            value += v;
            grad.push(g);
            w.push(h);
        }
        Ok(LikelihoodEval {
            value,
            grad,
            neg_hess_diag: w,
        })
    }

    fn log_likelihood(&self, y: &[f64], f: &[f64]) -> Result<f64> {
        check_len(y.len(), f.len())?;
        Ok(y.iter().zip(f).map(|(&yi, &fi)| self.point(yi, fi).0).sum())
    }
}

/// `y_i ~ N(f_i, s^2)`: conjugate to the GP prior, so Laplace is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTestLikelihood {
    pub noise: f64,
}

impl GaussianTestLikelihood {
    pub fn new(noise: f64) -> Result<Self> {
        if !(noise.is_finite() && noise > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise must be positive, got {noise}"
            )));
        }
        Ok(GaussianTestLikelihood { noise })
    }
}

impl LikelihoodModel for GaussianTestLikelihood {
    fn evaluate(&self, y: &[f64], f: &[f64]) -> Result<LikelihoodEval> {
        check_len(y.len(), f.len())?;
        let s2 = self.noise * self.noise;
        let norm = -0.5 * (2.0 * PI * s2).ln();
        let mut value = 0.0;
        let mut grad = Vec::with_capacity(f.len());
        for (&yi, &fi) in y.iter().zip(f) {
            let r = yi - fi;
            value += norm - 0.5 * r * r / s2;
            grad.push(r / s2);
        }
        Ok(LikelihoodEval {
            value,
            grad,
            neg_hess_diag: vec![1.0 / s2; f.len()],
        })
    }
}

/// Likelihood that ignores the data. Useful for prior sampling.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlatLikelihood;

impl LikelihoodModel for FlatLikelihood {
    fn evaluate(&self, y: &[f64], f: &[f64]) -> Result<LikelihoodEval> {
        check_len(y.len(), f.len())?;
        Ok(LikelihoodEval {
            value: 0.0,
            grad: vec![0.0; f.len()],
            neg_hess_diag: vec![0.0; f.len()],
        })
    }
}

pub fn gcpv_loglik(y: &[f64], f: &[f64], warp: &WarpKind) -> Result<LikelihoodEval> {
    GcpvLikelihood::new(warp.clone()).evaluate(y, f)
}
