//! Independent reference computations for the integration tests.
//!
//! Nothing here calls into the library's linear algebra: matrices are plain
//! row-major `Vec<Vec<f64>>` and every factorization is written out.

#![allow(dead_code)]

use std::f64::consts::PI;

pub type Mat = Vec<Vec<f64>>;

pub fn se_kernel(amplitude: f64, lengthscale: f64, s: f64, t: f64) -> f64 {
    let r = (s - t) / lengthscale;
    amplitude * (-r * r).exp()
}

pub fn kernel(amplitude: f64, lengthscale: f64, t: &[f64], jitter: f64) -> Mat {
    let n = t.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = se_kernel(amplitude, lengthscale, t[i], t[j]);
        }
        k[i][i] += jitter;
    }
    k
}

/// Lower Cholesky factor by the Cholesky–Banachiewicz recurrence.
pub fn cholesky(a: &Mat) -> Option<Mat> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

pub fn forward(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / l[i][i];
    }
    x
}

pub fn backward(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (b[i] - s) / l[i][i];
    }
    x
}

/// Solves `L L' x = b`.
pub fn chol_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    backward(l, &forward(l, b))
}

pub fn log_det(l: &Mat) -> f64 {
    2.0 * (0..l.len()).map(|i| l[i][i].ln()).sum::<f64>()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mat_vec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, x)).collect()
}

pub fn frobenius(a: &Mat) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err_vec(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got
        .iter()
        .zip(want)
        .map(|(g, w)| (g - w).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

pub fn rel_err_scalar(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Closed-form GP regression with `y ~ N(f, noise^2 I)`.
pub struct GpRegression {
    pub posterior_mean: Vec<f64>,
    pub posterior_cov: Mat,
    pub log_marginal: f64,
    ky_chol: Mat,
    alpha: Vec<f64>,
}

impl GpRegression {
    pub fn new(k: &Mat, y: &[f64], noise: f64) -> Self {
        let n = y.len();
        let mut ky = k.clone();
        for (i, row) in ky.iter_mut().enumerate() {
            row[i] += noise * noise;
        }
        let l = cholesky(&ky).expect("K + s^2 I is positive definite");
        let alpha = chol_solve(&l, y);
        let posterior_mean = mat_vec(k, &alpha);
        // K - K Ky^{-1} K, column by column
        let mut cov = k.clone();
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| k[i][j]).collect();
            let v = chol_solve(&l, &col);
            let kv = mat_vec(k, &v);
            for i in 0..n {
                cov[i][j] -= kv[i];
            }
        }
        let log_marginal =
            -0.5 * dot(y, &alpha) - 0.5 * log_det(&l) - 0.5 * n as f64 * (2.0 * PI).ln();
        GpRegression {
            posterior_mean,
            posterior_cov: cov,
            log_marginal,
            ky_chol: l,
            alpha,
        }
    }

    pub fn predict(&self, kstar: &[f64], kss: f64) -> (f64, f64) {
        let mean = dot(kstar, &self.alpha);
        let v = forward(&self.ky_chol, kstar);
        (mean, kss - dot(&v, &v))
    }
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&mut f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Simpson over `[a, b]` split into `pieces` equal panels, so that narrow
/// features are not skipped by the first coarse estimate.
pub fn simpson_panels<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    pieces: usize,
    tol: f64,
) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            simpson(
                &mut f,
                a + i as f64 * h,
                a + (i + 1) as f64 * h,
                tol / pieces as f64,
            )
        })
        .sum()
}

/// Nested 2-D adaptive Simpson over `[a, b]^2`.
pub fn simpson_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    pieces: usize,
    tol: f64,
) -> f64 {
    let inner_tol = tol / (b - a);
    simpson_panels(
        |x| simpson_panels(|y| f(x, y), a, b, pieces, inner_tol),
        a,
        b,
        pieces,
        tol,
    )
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Monte Carlo standard error of the mean of a correlated chain, by
/// non-overlapping batch means.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    assert!(size >= 2, "chain too short for {batches} batches");
    let means: Vec<f64> = x.chunks_exact(size).take(batches).map(mean).collect();
    let m = mean(&means);
    let var = means.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

pub fn std_normal_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}
