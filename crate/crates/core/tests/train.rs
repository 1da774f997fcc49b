mod common;

use common::{cholesky, kernel, mat_vec};
use gcpv::rng::seeded;
use gcpv::train::{train, ModelConfig, ModelKind, OptimizeOptions, TrainedModel};
use gcpv::warp::softplus;
use rand::Rng;
use rand_distr::StandardNormal;

const TRUE_LENGTHSCALE: f64 = 1.0;

/// `n` points from the model itself: `f ~ GP(0, k)` with `A = 1`, then
/// `sigma = softplus(f)` and `y ~ N(0, sigma^2)`.
fn from_model(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
    let l = cholesky(&kernel(1.0, TRUE_LENGTHSCALE, &t, 1e-8)).unwrap();
    let mut rng = seeded(seed);
    let z: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let f = mat_vec(&l, &z);
    let y = f
        .iter()
        .map(|&fi| softplus(fi) * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (t, y)
}

#[test]
fn recovers_lengthscale_from_model_data() {
    let (t, y) = from_model(400, 21);
    let res = train(&t, &y, &ModelConfig::gcpv(), &OptimizeOptions::default()).unwrap();
    assert!(res.converged(), "{:?}", res.stop);
    let l = res.z.lengthscale();
    assert!(
        (l - TRUE_LENGTHSCALE).abs() <= 0.3 * TRUE_LENGTHSCALE,
        "recovered l = {l}"
    );
}

#[test]
fn gp_exp_trains_amplitude_and_lengthscale_only() {
    let (t, y) = from_model(120, 22);
    let res = train(&t, &y, &ModelConfig::gp_exp(), &OptimizeOptions::default()).unwrap();
    assert_eq!(res.z.len(), 2);
    assert!(res.objective >= res.initial_objective);
    let model = TrainedModel::from_result(ModelKind::GpExp, &t, &res).unwrap();
    let json: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
    assert!(json["warp"].get("components").is_none(), "{json}");
}

#[test]
fn trained_model_json_roundtrips() {
    let (t, y) = from_model(80, 23);
    let res = train(&t, &y, &ModelConfig::gcpv(), &OptimizeOptions::default()).unwrap();
    let model = TrainedModel::from_result(ModelKind::Gcpv, &t, &res).unwrap();
    let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
    // hyperparameters are stored on their natural scale, so allow one ulp of exp/ln
    for (a, b) in back.hypers().unwrap().values.iter().zip(&res.z.values) {
        assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0), "{a} vs {b}");
    }
    assert_eq!(back.log_marginal, res.objective);
}
