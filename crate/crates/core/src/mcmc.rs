//! Elliptical slice sampling of the latent posterior and the Gaussian-mixture
//! predictive built from its samples.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::kernel::factor;
use crate::likelihood::LikelihoodModel;

/// Shrinks allowed per transition before the sampler gives up. The bracket
/// collapses onto the current state, so hitting this is a defect signal.
pub const MAX_SHRINKS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOptions {
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            burn_in: 10_000,
            samples: 10_000,
            thin: 1,
        }
    }
}

/// Recorded chain states, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: DMatrix<f64>,
    pub logliks: Vec<f64>,
    pub seed: u64,
    pub burn_in: usize,
    pub thin: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.samples.column_mean()
    }

    /// Binary layout, all little-endian: `n: u64, J: u64, seed: u64`, then the
    /// `J x n` samples row-major as `f64`, then the `J` log likelihoods.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        for v in [self.dim() as u64, self.len() as u64, self.seed] {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        for x in self.samples.iter().chain(&self.logliks) {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut buf = [0u8; 8];
        let mut next = |r: &mut BufReader<File>| -> Result<[u8; 8]> {
            r.read_exact(&mut buf).map_err(io)?;
            Ok(buf)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let j = u64::from_le_bytes(next(&mut r)?) as usize;
        let seed = u64::from_le_bytes(next(&mut r)?);
        let mut values = Vec::with_capacity(n * j);
        for _ in 0..n * j {
            values.push(f64::from_le_bytes(next(&mut r)?));
        }
        let mut logliks = Vec::with_capacity(j);
        for _ in 0..j {
            logliks.push(f64::from_le_bytes(next(&mut r)?));
        }
        Ok(SampleSet {
            samples: DMatrix::from_vec(n, j, values),
            logliks,
            seed,
            burn_in: 0,
            thin: 1,
        })
    }
}

/// One elliptical slice sampling transition.
///
/// `prior_chol` is the lower Cholesky factor of the prior covariance and
/// `current_loglik` the log likelihood at `f`. Returns the new state and its
/// log likelihood.
pub fn ess_step<R, F>(
    f: &DVector<f64>,
    current_loglik: f64,
    prior_chol: &DMatrix<f64>,
    mut loglik: F,
    rng: &mut R,
) -> Result<(DVector<f64>, f64)>
where
    R: Rng + ?Sized,
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    let n = f.len();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let nu = prior_chol * z;
    let u: f64 = 1.0 - rng.random::<f64>();
    let threshold = current_loglik + u.ln();

    let mut angle = rng.random::<f64>() * 2.0 * PI;
    let (mut lo, mut hi) = (angle - 2.0 * PI, angle);
    for _ in 0..MAX_SHRINKS {
        let proposal = f * angle.cos() + &nu * angle.sin();
        let ll = loglik(&proposal)?;
        if ll > threshold {
            return Ok((proposal, ll));
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        angle = lo + rng.random::<f64>() * (hi - lo);
    }
    Err(Error::ShrinkExhausted(MAX_SHRINKS))
}

/// Runs one chain from `f = 0`, discarding `burn_in` transitions and then
/// recording every `thin`-th state until `samples` are stored.
pub fn sample_posterior(
    k: &DMatrix<f64>,
    y: &[f64],
    lik: &dyn LikelihoodModel,
    opts: &SamplerOptions,
    seed: u64,
) -> Result<SampleSet> {
    let n = k.nrows();
    check_len(n, y.len())?;
    if opts.samples == 0 || opts.thin == 0 {
        return Err(Error::InvalidParameter(
            "samples and thin must be at least 1".into(),
        ));
    }
    let chol = factor(k.clone())?;
    let l = chol.l();
    let mut rng = crate::rng::seeded(seed);
    let mut ll_fn = |f: &DVector<f64>| lik.log_likelihood(y, f.as_slice());

    let mut f = DVector::zeros(n);
    let mut ll = ll_fn(&f)?;
    for _ in 0..opts.burn_in {
        (f, ll) = ess_step(&f, ll, &l, &mut ll_fn, &mut rng)?;
    }

    let mut samples = DMatrix::zeros(n, opts.samples);
    let mut logliks = Vec::with_capacity(opts.samples);
    for j in 0..opts.samples {
        for _ in 0..opts.thin {
            (f, ll) = ess_step(&f, ll, &l, &mut ll_fn, &mut rng)?;
        }
        samples.set_column(j, &f);
        logliks.push(ll);
    }
    Ok(SampleSet {
        samples,
        logliks,
        seed,
        burn_in: opts.burn_in,
        thin: opts.thin,
    })
}

/// Equal-weight mixture of the GP conditionals `p(f* | f^i)` over a sample set.
///
/// Construction factors `K` once; each test point then costs one `O(n^2)`
/// solve plus `O(J n)` for the component means, after which draws are `O(1)`.
pub struct MixturePredictor<'a> {
    samples: &'a SampleSet,
    chol: Cholesky<f64, Dyn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponents {
    pub means: Vec<f64>,
    /// Shared by every component.
    pub variance: f64,
}

impl MixtureComponents {
    pub fn mean(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.means.len() as f64
    }

    pub fn draw<R: Rng + ?Sized>(&self, draws: usize, rng: &mut R) -> Vec<f64> {
        let sd = self.variance.sqrt();
        (0..draws)
            .map(|_| {
                let i = rng.random_range(0..self.means.len());
                self.means[i] + sd * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }
}

impl<'a> MixturePredictor<'a> {
    pub fn new(samples: &'a SampleSet, k: &DMatrix<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("empty sample set".into()));
        }
        check_len(samples.dim(), k.nrows())?;
        Ok(MixturePredictor {
            samples,
            chol: factor(k.clone())?,
        })
    }

    pub fn components(&self, kstar: &DVector<f64>, kstarstar: f64) -> Result<MixtureComponents> {
        check_len(self.samples.dim(), kstar.len())?;
        let w = self.chol.solve(kstar);
        let means = (self.samples.samples.transpose() * &w).data.into();
        let variance = (kstarstar - kstar.dot(&w)).max(0.0);
        Ok(MixtureComponents { means, variance })
    }
}

/// Draws of `f*` from the sample-based mixture predictive.
pub fn predict_mixture<R: Rng + ?Sized>(
    ss: &SampleSet,
    k: &DMatrix<f64>,
    kstar: &DVector<f64>,
    kstarstar: f64,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let comps = MixturePredictor::new(ss, k)?.components(kstar, kstarstar)?;
    Ok(comps.draw(draws, rng))
}

/// Split potential scale reduction over several chains of one scalar.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect();
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let between = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    (((n - 1.0) / n * within + between / n) / within).sqrt()
}

/// Coordinate-wise slice sampling sweep (stepping out, then shrinkage).
/// Benchmark baseline for comparison with [`ess_step`]; not for inference.
#[doc(hidden)]
pub fn axis_slice_sweep<R: Rng + ?Sized>(
    f: &mut DVector<f64>,
    precision: &DMatrix<f64>,
    y: &[f64],
    lik: &dyn LikelihoodModel,
    width: f64,
    rng: &mut R,
) -> Result<()> {
    let n = f.len();
    for i in 0..n {
        let pii = precision[(i, i)];
        let cond_mean = f[i] - precision.column(i).dot(f) / pii;
        let log_target = |v: f64| -> Result<f64> {
            let prior = -0.5 * pii * (v - cond_mean).powi(2);
            Ok(prior + lik.log_likelihood(&y[i..=i], &[v])?)
        };
        let x0 = f[i];
        let level = log_target(x0)? + (1.0 - rng.random::<f64>()).ln();
        let mut lo = x0 - width * rng.random::<f64>();
        let mut hi = lo + width;
        while log_target(lo)? > level {
            lo -= width;
        }
        while log_target(hi)? > level {
            hi += width;
        }
        loop {
            let x = lo + rng.random::<f64>() * (hi - lo);
            if log_target(x)? > level {
                f[i] = x;
                break;
            }
            if x < x0 {
                lo = x;
            } else {
                hi = x;
            }
        }
    }
    Ok(())
}
