use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn gcpv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcpv"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gcpv(dir, args);
    assert!(
        out.status.success(),
        "gcpv {} failed ({:?}): {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// A directory holding `trig.csv` and a GCPV model trained on it.
fn workspace() -> &'static TempDir {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        ok(
            dir.path(),
            &["simulate", "trig", "--seed", "1", "--out", "trig.csv"],
        );
        ok(dir.path(), &["fit", "trig.csv", "--out", "model.json"]);
        dir
    })
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn simulate_writes_the_trig_grid() {
    let d = workspace().path();
    let text = read(d, "trig.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,y,true_sigma"));
    assert_eq!(lines.count(), 201);
}

#[test]
fn simulate_defaults_to_stdout_and_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let a = ok(d.path(), &["simulate", "jump", "--seed", "1"]);
    assert_eq!(a.lines().count(), 62);
    assert_eq!(a, ok(d.path(), &["simulate", "jump", "--seed", "1"]));
    assert_ne!(a, ok(d.path(), &["simulate", "jump", "--seed", "2"]));
}

#[test]
fn simulate_requires_a_seed() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(gcpv(d.path(), &["simulate", "trig"]).status.code(), Some(1));
}

#[test]
fn fit_converges_on_trig() {
    let d = workspace().path();
    let model: serde_json::Value = serde_json::from_str(&read(d, "model.json")).unwrap();
    assert_eq!(model["converged"], true);
    assert!(model["log_marginal"].as_f64().unwrap().is_finite());
    let out = gcpv(d, &["fit", "trig.csv", "--out", "again.json"]);
    assert_eq!(out.status.code(), Some(0));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(
        summary.contains("n=201") && summary.contains("converged=true"),
        "{summary}"
    );
}

#[test]
fn gp_exp_model_has_no_warp_components() {
    let d = workspace().path();
    ok(
        d,
        &["fit", "trig.csv", "--model", "gp-exp", "--out", "exp.json"],
    );
    let model: serde_json::Value = serde_json::from_str(&read(d, "exp.json")).unwrap();
    assert!(!read(d, "exp.json").contains("components"), "{model}");
}

#[test]
fn missing_data_file_exits_2_naming_the_path() {
    let d = tempfile::tempdir().unwrap();
    let out = gcpv(d.path(), &["fit", "no_such.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such.csv"));
}

#[test]
fn historical_predictions_cover_every_point() {
    let d = workspace().path();
    let csv = ok(
        d,
        &[
            "predict",
            "trig.csv",
            "--model",
            "model.json",
            "--seed",
            "3",
            "--draws",
            "500",
        ],
    );
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t,mean_sigma,var_sigma,lo95,hi95,reference")
    );
    assert_eq!(lines.count(), 201);
}

#[test]
fn mcmc_predictions_are_byte_reproducible() {
    let d = workspace().path();
    let args = [
        "predict",
        "trig.csv",
        "--model",
        "model.json",
        "--inference",
        "mcmc",
        "--samples",
        "100",
        "--burnin",
        "100",
        "--seed",
        "7",
        "--draws",
        "200",
    ];
    assert_eq!(ok(d, &args), ok(d, &args));
}

#[test]
fn forecast_has_one_column_per_horizon() {
    let d = workspace().path();
    let csv = ok(
        d,
        &[
            "predict",
            "trig.csv",
            "--model",
            "model.json",
            "--mode",
            "forecast",
            "--horizons",
            "1,7,30",
            "--seed",
            "3",
            "--draws",
            "200",
            "--min-history",
            "190",
        ],
    );
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,h1,h7,h30"));
    assert!(lines.all(|l| l.split(',').count() == 4));
}

#[test]
fn backtest_table_has_two_rows_and_four_columns() {
    let d = workspace().path();
    let table = ok(
        d,
        &[
            "backtest",
            "trig.csv",
            "--models",
            "gcpv-la,garch",
            "--seed",
            "1",
            "--out",
            "bt.json",
        ],
    );
    let header = table.lines().next().unwrap();
    for col in ["Historical", "1 step", "7 step", "30 step"] {
        assert!(header.contains(col), "{header}");
    }
    let report: serde_json::Value = serde_json::from_str(&read(d, "bt.json")).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r["historical"].as_f64().is_some());
        assert_eq!(r["forecasts"].as_array().unwrap().len(), 3);
    }
    assert!(
        table.contains("GCPV (LA)") && table.contains("GARCH"),
        "{table}"
    );
}

#[test]
fn backtest_uses_rolling_defaults_on_price_data() {
    let d = tempfile::tempdir().unwrap();
    let mut csv = String::from("date,price\n");
    let mut p: f64 = 100.0;
    for i in 0..140 {
        p *= 1.0 + 0.01 * ((i * 37 % 11) as f64 - 5.0) / 5.0;
        csv.push_str(&format!("day{i},{p}\n"));
    }
    std::fs::write(d.path().join("fx.csv"), csv).unwrap();
    ok(
        d.path(),
        &[
            "backtest", "fx.csv", "--models", "garch", "--seed", "1", "--out", "r.json",
        ],
    );
    let report: serde_json::Value = serde_json::from_str(&read(d.path(), "r.json")).unwrap();
    let w = &report["datasets"][0]["windowing"];
    assert_eq!(w["kind"], "rolling");
    assert_eq!(w["window"], 120);
    assert_eq!(w["step"], 7);
    assert_eq!(report["rows"][0]["historical_in_sample"], true);
}

#[test]
fn backtest_rejects_an_empty_model_list() {
    let d = workspace().path();
    assert_eq!(
        gcpv(d, &["backtest", "trig.csv", "--models", "", "--seed", "1"])
            .status
            .code(),
        Some(1)
    );
}

/// Parses `sigma,cdf,pdf` rows.
fn grid(csv: &str) -> Vec<[f64; 3]> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect()
}

#[test]
fn exponential_warp_marginal_is_lognormal() {
    let d = workspace().path();
    ok(
        d,
        &[
            "fit",
            "trig.csv",
            "--model",
            "gp-exp",
            "--out",
            "exp_unit.json",
        ],
    );
    let mut model: serde_json::Value = serde_json::from_str(&read(d, "exp_unit.json")).unwrap();
    model["kernel"]["amplitude"] = 1.0.into();
    std::fs::write(d.join("exp_unit.json"), model.to_string()).unwrap();
    let rows = grid(&ok(
        d,
        &["marginal", "--model", "exp_unit.json", "--points", "300"],
    ));
    assert_eq!(rows.len(), 300);
    for [s, _, pdf] in &rows {
        let lognormal = (-(s.ln().powi(2)) / 2.0).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        assert!(
            (pdf - lognormal).abs() <= 1e-8,
            "sigma {s}: {pdf} vs {lognormal}"
        );
    }
}

#[test]
fn marginal_cdf_is_monotone_over_the_quantile_range() {
    let d = workspace().path();
    let model: serde_json::Value = serde_json::from_str(&read(d, "model.json")).unwrap();
    let floor = model["warp"]["floor"].as_f64().unwrap();
    let rows = grid(&ok(d, &["marginal", "--model", "model.json"]));
    assert_eq!(rows.len(), 500);
    assert!(rows
        .windows(2)
        .all(|w| w[1][1] >= w[0][1] && w[1][0] > w[0][0]));
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    assert!(
        first[0] > floor && first[0] - floor <= 1e-6 * (last[0] - floor),
        "{first:?}"
    );
    assert!((last[1] - 0.999).abs() <= 1e-9, "upper cdf {}", last[1]);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("c.toml"),
        "[simulate]\nname = \"jump\"\nseed = 5\n",
    )
    .unwrap();
    let from_config = ok(d.path(), &["--config", "c.toml", "simulate"]);
    assert_eq!(
        from_config,
        ok(d.path(), &["simulate", "jump", "--seed", "5"])
    );
    let overridden = ok(d.path(), &["--config", "c.toml", "simulate", "--seed", "6"]);
    assert_eq!(
        overridden,
        ok(d.path(), &["simulate", "jump", "--seed", "6"])
    );

    std::fs::write(d.path().join("bad.toml"), "[simulate]\nbogus = 1\n").unwrap();
    assert_eq!(
        gcpv(d.path(), &["--config", "bad.toml", "simulate"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn help_lists_flags_with_defaults() {
    let d = tempfile::tempdir().unwrap();
    let help = ok(d.path(), &["backtest", "--help"]);
    for flag in [
        "--models",
        "--seed",
        "--window",
        "--step",
        "--horizons",
        "--draws",
        "--out",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    assert!(
        help.contains("[default: 120]") && help.contains("[default: 7]"),
        "{help}"
    );
    for cmd in ["simulate", "fit", "predict", "marginal"] {
        let h = ok(d.path(), &[cmd, "--help"]);
        assert!(h.contains("[default:"), "{cmd} help lists no defaults");
    }
}
