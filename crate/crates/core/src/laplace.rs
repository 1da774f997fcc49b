//! Laplace approximation to the latent posterior `p(f | y)`.
//!
//! Mode finding is Newton's method on
//! `s(f) = log p(y | f) - 1/2 f' K^{-1} f` (constants in `K` dropped), with two
//! modifications for likelihoods that are not log-concave:
//!
//! * the diagonal negative Hessian `W` is clipped to `W~ = max(W, 0)` so the
//!   Newton system stays positive definite, and
//! * the iteration is carried in `a = K^{-1} f` through
//!   `B = I + W~^{1/2} K W~^{1/2}`, whose eigenvalues are bounded below by one,
//!   so `K` itself is never inverted.
//!
//! A step-halving line search keeps the objective sequence non-decreasing.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_len, Error, Result};
use crate::kernel::factor;
use crate::likelihood::LikelihoodModel;

/// Lower bound applied to predictive variances lost to cancellation.
pub const MIN_PREDICTIVE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    /// Stop once an accepted step changes the objective by less than this.
    pub tol: f64,
    /// Alternative stop: `||grad s||_inf` below this.
    pub grad_tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-6,
            grad_tol: 1e-6,
            max_iterations: 100,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LaplaceFit {
    pub fhat: DVector<f64>,
    /// Clipped negative Hessian diagonal at the mode.
    pub wtilde: DVector<f64>,
    /// Cholesky factor of `B = I + W~^{1/2} K W~^{1/2}` at the mode.
    pub chol_b: Cholesky<f64, Dyn>,
    /// `K^{-1} fhat`, carried through the iteration.
    pub a_fhat: DVector<f64>,
    pub grad_at_mode: DVector<f64>,
    pub loglik_at_mode: f64,
    pub log_marginal: f64,
    /// Objective after the starting point and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveGaussian {
    pub mean: f64,
    pub variance: f64,
    /// Set when the computed variance fell below [`MIN_PREDICTIVE_VARIANCE`].
    pub clamped: bool,
}

struct Curvature {
    sqrt_w: DVector<f64>,
    wtilde: DVector<f64>,
    chol_b: Cholesky<f64, Dyn>,
}

fn curvature(k: &DMatrix<f64>, neg_hess: &[f64]) -> Result<Curvature> {
    let n = k.nrows();
    let wtilde = DVector::from_iterator(n, neg_hess.iter().map(|&w| w.max(0.0)));
    let sqrt_w = wtilde.map(f64::sqrt);
    let mut b = k.clone();
    for j in 0..n {
        for i in 0..n {
            b[(i, j)] *= sqrt_w[i] * sqrt_w[j];
        }
        b[(j, j)] += 1.0;
    }
    let chol_b = factor(b).map_err(|e| {
        Error::CholeskyFailure(format!(
            "B matrix with clipped W is not positive definite: {e}"
        ))
    })?;
    Ok(Curvature {
        sqrt_w,
        wtilde,
        chol_b,
    })
}

fn sum_log_diag(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum()
}

/// Finds the posterior mode starting from `f = 0`.
pub fn find_mode(
    k: &DMatrix<f64>,
    y: &[f64],
    lik: &dyn LikelihoodModel,
    opts: &NewtonOptions,
) -> Result<LaplaceFit> {
    find_mode_from(k, y, lik, opts, None)
}

/// Finds the posterior mode, optionally warm-started from `f = K a0`.
///
/// Warm-starting through `a` rather than `f` lets a previous fit's
/// `a_fhat` seed a fit under a different `K` without any solve.
pub fn find_mode_from(
    k: &DMatrix<f64>,
    y: &[f64],
    lik: &dyn LikelihoodModel,
    opts: &NewtonOptions,
    a0: Option<&DVector<f64>>,
) -> Result<LaplaceFit> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::InvalidParameter(
            "covariance matrix must be square".into(),
        ));
    }
    check_len(n, y.len())?;

    let mut a = match a0 {
        Some(a0) => {
            check_len(n, a0.len())?;
            a0.clone()
        }
        None => DVector::zeros(n),
    };
    let mut f = k * &a;
    let mut eval = lik.evaluate(y, f.as_slice())?;
    let mut psi = eval.value - 0.5 * f.dot(&a);
    if !psi.is_finite() && a0.is_some() {
        // a bad warm start is not fatal; fall back to the prior mean
        a.fill(0.0);
        f.fill(0.0);
        eval = lik.evaluate(y, f.as_slice())?;
        psi = eval.value;
    }
    if !psi.is_finite() {
        return Err(Error::InvalidParameter(
            "objective is not finite at the starting point".into(),
        ));
    }

    let mut trace = vec![psi];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        let grad = DVector::from_column_slice(&eval.grad);
        let grad_s = &grad - &a;
        if grad_s.amax() < opts.grad_tol {
            converged = true;
            break;
        }

        let curv = curvature(k, &eval.neg_hess_diag)?;
        // b = W~ f + grad;  a_new = b - W~^{1/2} B^{-1} W~^{1/2} K b
        let b = curv.wtilde.component_mul(&f) + &grad;
        let kb = k * &b;
        let mut rhs = curv.sqrt_w.component_mul(&kb);
        curv.chol_b.solve_mut(&mut rhs);
        let a_newton = &b - curv.sqrt_w.component_mul(&rhs);
        let delta = a_newton - &a;

        iterations += 1;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let a_try = &a + step * &delta;
            let f_try = k * &a_try;
            if let Ok(e) = lik.evaluate(y, f_try.as_slice()) {
                let psi_try = e.value - 0.5 * f_try.dot(&a_try);
                if psi_try.is_finite() && psi_try >= psi {
                    accepted = Some((a_try, f_try, e, psi_try));
                    break;
                }
            }
            step *= 0.5;
        }

        match accepted {
            Some((a_new, f_new, e_new, psi_new)) => {
                let change = psi_new - psi;
                a = a_new;
                f = f_new;
                eval = e_new;
                psi = psi_new;
                trace.push(psi);
                if change < opts.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                // No step along the Newton direction increases the objective:
                // stationary to working precision.
                converged = true;
                break;
            }
        }
    }

    let curv = curvature(k, &eval.neg_hess_diag)?;
    let loglik = eval.value;
    let log_marginal = -0.5 * f.dot(&a) + loglik - sum_log_diag(&curv.chol_b);
    let fit = LaplaceFit {
        fhat: f,
        wtilde: curv.wtilde,
        chol_b: curv.chol_b,
        a_fhat: a,
        grad_at_mode: DVector::from_vec(eval.grad),
        loglik_at_mode: loglik,
        log_marginal,
        objective_trace: trace,
        iterations,
        converged,
    };
    if converged {
        Ok(fit)
    } else {
        Err(Error::MaxIterationsExceeded {
            iterations,
            best: Box::new(fit),
        })
    }
}

impl LaplaceFit {
    fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NotConverged)
        }
    }

    pub fn sqrt_w(&self) -> DVector<f64> {
        self.wtilde.map(f64::sqrt)
    }

    pub fn log_det_b(&self) -> f64 {
        2.0 * sum_log_diag(&self.chol_b)
    }

    /// Approximate log marginal likelihood
    /// `-1/2 fhat' a + log p(y | fhat) - 1/2 log |B|`.
    pub fn log_marginal(&self, y: &[f64], lik: &dyn LikelihoodModel) -> Result<f64> {
        self.require_converged()?;
        self.log_marginal_unchecked(y, lik)
    }

    /// [`LaplaceFit::log_marginal`] without the convergence check.
    pub fn log_marginal_unchecked(&self, y: &[f64], lik: &dyn LikelihoodModel) -> Result<f64> {
        let loglik = lik.log_likelihood(y, self.fhat.as_slice())?;
        Ok(-0.5 * self.fhat.dot(&self.a_fhat) + loglik - 0.5 * self.log_det_b())
    }

    /// Gaussian approximation to `p(f* | y)` at one test input.
    pub fn predict(&self, kstar: &DVector<f64>, kstarstar: f64) -> Result<PredictiveGaussian> {
        self.require_converged()?;
        check_len(self.fhat.len(), kstar.len())?;
        let mean = kstar.dot(&self.grad_at_mode);
        let mut v = self.sqrt_w().component_mul(kstar);
        self.chol_b.l_dirty().solve_lower_triangular_mut(&mut v);
        let raw = kstarstar - v.norm_squared();
        let clamped = !(raw >= MIN_PREDICTIVE_VARIANCE);
        Ok(PredictiveGaussian {
            mean,
            variance: if clamped {
                MIN_PREDICTIVE_VARIANCE
            } else {
                raw
            },
            clamped,
        })
    }

    /// `K - K Q K` with `Q = W~^{1/2} B^{-1} W~^{1/2}`.
    pub fn posterior_covariance(&self, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.require_converged()?;
        let n = self.fhat.len();
        check_len(n, k.nrows())?;
        let sw = self.sqrt_w();
        let mut v = k.clone();
        for j in 0..n {
            for i in 0..n {
                v[(i, j)] *= sw[i];
            }
        }
        self.chol_b.l_dirty().solve_lower_triangular_mut(&mut v);
        let mut cov = k - v.transpose() * &v;
        for j in 0..n {
            for i in (j + 1)..n {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        Ok(cov)
    }
}

pub fn log_marginal(fit: &LaplaceFit, y: &[f64], lik: &dyn LikelihoodModel) -> Result<f64> {
    fit.log_marginal(y, lik)
}

pub fn predict_latent(
    fit: &LaplaceFit,
    k: &DMatrix<f64>,
    kstar: &DVector<f64>,
    kstarstar: f64,
) -> Result<PredictiveGaussian> {
    check_len(k.nrows(), kstar.len())?;
    fit.predict(kstar, kstarstar)
}

pub fn posterior_covariance(fit: &LaplaceFit, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    fit.posterior_covariance(k)
}
