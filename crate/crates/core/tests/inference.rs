mod common;

use common::*;
use gcpv::data::simulate_trig;
use gcpv::kernel::{kernel_matrix, Covariance, KernelSpec};
use gcpv::laplace::{find_mode, NewtonOptions};
use gcpv::likelihood::{GaussianTestLikelihood, GcpvLikelihood};
use gcpv::mcmc::{sample_posterior, MixturePredictor, SamplerOptions};
use gcpv::rng::seeded;
use gcpv::train::{train, ModelConfig, OptimizeOptions};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug)]
struct Problem {
    t: Vec<f64>,
    y: Vec<f64>,
    amp: f64,
    ell: f64,
    noise: f64,
}

fn problem(n: usize, seed: u64, amp: f64, ell: f64, noise: f64) -> Problem {
    let mut rng = seeded(seed);
    let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..6.0)).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    let y = t
        .iter()
        .map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Problem {
        t,
        y,
        amp,
        ell,
        noise,
    }
}

fn arb_problem() -> impl Strategy<Value = Problem> {
    (
        1usize..40,
        any::<u64>(),
        0.2..3.0f64,
        0.1..3.0f64,
        0.05..2.0f64,
    )
        .prop_map(|(n, seed, amp, ell, noise)| problem(n, seed, amp, ell, noise))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_mode_covariance_and_evidence_are_exact(p in arb_problem()) {
        let spec = KernelSpec::squared_exponential(p.amp, p.ell).unwrap();
        let jitter = spec.default_jitter();
        let k = kernel_matrix(&spec, &p.t, jitter).unwrap();
        let lik = GaussianTestLikelihood::new(p.noise).unwrap();
        let fit = find_mode(&k, &p.y, &lik, &NewtonOptions::default()).unwrap();
        let oracle = GpRegression::new(&kernel(p.amp, p.ell, &p.t, jitter), &p.y, p.noise);

        for (a, b) in fit.fhat.iter().zip(&oracle.posterior_mean) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "mode {a} vs {b}");
        }
        prop_assert!((fit.log_marginal - oracle.log_marginal).abs() <= 1e-6,
            "evidence {} vs {}", fit.log_marginal, oracle.log_marginal);
        let cov = fit.posterior_covariance(&k).unwrap();
        for i in 0..p.t.len() {
            for j in 0..p.t.len() {
                let want = oracle.posterior_cov[i][j];
                prop_assert!((cov[(i, j)] - want).abs() <= 1e-8 * p.amp, "cov {} vs {want}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn predictive_at_a_training_input_is_the_posterior_marginal(p in arb_problem()) {
        let spec = KernelSpec::squared_exponential(p.amp, p.ell).unwrap();
        let jitter = spec.default_jitter();
        let k = kernel_matrix(&spec, &p.t, jitter).unwrap();
        let lik = GaussianTestLikelihood::new(p.noise).unwrap();
        let fit = find_mode(&k, &p.y, &lik, &NewtonOptions::default()).unwrap();
        let oracle = GpRegression::new(&kernel(p.amp, p.ell, &p.t, jitter), &p.y, p.noise);
        for &ti in &p.t {
            let pred = fit.predict(&spec.cross(&p.t, ti), spec.variance()).unwrap();
            let ks: Vec<f64> = p.t.iter().map(|&s| se_kernel(p.amp, p.ell, ti, s)).collect();
            let (m, v) = oracle.predict(&ks, p.amp);
            prop_assert!((pred.mean - m).abs() <= 1e-8 * m.abs().max(1.0), "mean {} vs {m}", pred.mean);
            prop_assert!((pred.variance - v).abs() <= 1e-8 * p.amp, "variance {} vs {v}", pred.variance);
        }
    }
}

#[test]
fn scalar_mode_matches_grid_search() {
    let w = gcpv::warp::WarpKind::Parametric(gcpv::warp::WarpParams::initial_for(&[0.5]).unwrap());
    let lik = GcpvLikelihood::new(w.clone());
    let k = nalgebra::DMatrix::from_element(1, 1, 1.0);
    let fit = find_mode(&k, &[0.5], &lik, &NewtonOptions::default()).unwrap();
    let objective = |f: f64| {
        let g = w.eval(f);
        -g.ln() - 0.125 / (g * g) - 0.5 * f * f
    };
    let best = (0..=200_000)
        .map(|i| -10.0 + i as f64 * 1e-4)
        .max_by(|a, b| objective(*a).total_cmp(&objective(*b)))
        .unwrap();
    assert!(
        (fit.fhat[0] - best).abs() <= 1e-3,
        "{} vs {best}",
        fit.fhat[0]
    );
}

#[test]
fn laplace_sigma_at_midpoint_lies_in_mcmc_band() {
    let ts = simulate_trig(1);
    let z = train(
        &ts.times,
        &ts.values,
        &ModelConfig::gcpv(),
        &OptimizeOptions::default(),
    )
    .unwrap()
    .z;
    let (kern, warp) = z.unpack().unwrap();
    let k = kern.matrix_unchecked(&ts.times, kern.default_jitter());
    let lik = GcpvLikelihood::new(warp.clone());
    let fit = find_mode(&k, &ts.values, &lik, &NewtonOptions::default()).unwrap();
    let kstar = kern.cross(&ts.times, 2.0);
    let la = warp.eval(fit.predict(&kstar, kern.variance()).unwrap().mean);

    let ss = sample_posterior(&k, &ts.values, &lik, &SamplerOptions::default(), 5).unwrap();
    let comps = MixturePredictor::new(&ss, &k)
        .unwrap()
        .components(&kstar, kern.variance())
        .unwrap();
    let mut sigmas: Vec<f64> = comps
        .draw(10_000, &mut seeded(6))
        .into_iter()
        .map(|f| warp.eval(f))
        .collect();
    sigmas.sort_by(f64::total_cmp);
    let (lo, hi) = (sigmas[250], sigmas[9750]);
    assert!(
        lo <= la && la <= hi,
        "Laplace sigma {la} outside MCMC band [{lo}, {hi}]"
    );
}

#[test]
fn mixture_draws_follow_the_law_of_total_expectation() {
    let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.2).collect();
    let spec = KernelSpec::squared_exponential(1.0, 0.7).unwrap();
    let k = kernel_matrix(&spec, &t, spec.default_jitter()).unwrap();
    let mut rng = seeded(8);
    let y: Vec<f64> = t
        .iter()
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let w = gcpv::warp::WarpKind::Parametric(gcpv::warp::WarpParams::initial_for(&y).unwrap());
    let opts = SamplerOptions {
        burn_in: 500,
        samples: 2000,
        thin: 1,
    };
    let ss = sample_posterior(&k, &y, &GcpvLikelihood::new(w), &opts, 9).unwrap();
    let comps = MixturePredictor::new(&ss, &k)
        .unwrap()
        .components(&spec.cross(&t, 2.1), spec.variance())
        .unwrap();
    // draws are independent given the sample set
    let draws = comps.draw(10_000, &mut seeded(10));
    let m = mean(&draws);
    let sd = (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
    let se = sd / (draws.len() as f64).sqrt();
    assert!(
        (m - comps.mean()).abs() <= 3.0 * se,
        "{m} vs {} (se {se})",
        comps.mean()
    );
}
