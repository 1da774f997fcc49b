use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn run(script: &str) {
    Python::attach(|py| {
        let m = PyModule::new(py, "gcpv").unwrap();
        gcpv_python::gcpv_module(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("gcpv", m).unwrap();
        let code = CString::new(script).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python script failed");
        }
    });
}

#[test]
fn simulate_and_inspect_series() {
    run(r#"
ts = gcpv.simulate_trig(1)
assert len(ts) == 201
assert ts.name == "TRIG"
assert len(ts.true_sigma) == 201
ref = ts.reference_variance()
assert abs(ref[0] - ts.true_sigma[0] ** 2) < 1e-15
j = gcpv.simulate_jump(1)
assert sorted(set(j.true_sigma)) == [0.1, 7.0]
"#);
}

#[test]
fn fit_predict_and_marginal() {
    run(r#"
ts = gcpv.simulate_jump(2)
m = gcpv.Model.fit(ts)
assert m.converged and m.kind == "gcpv"
back = gcpv.Model.from_json(m.to_json())
assert abs(back.lengthscale - m.lengthscale) <= 1e-12 * m.lengthscale
p = m.predict_historical(ts, seed=3, draws=500)
assert len(p["mean_sigma"]) == len(ts)
assert all(v >= 0 for v in p["var_sigma"])
assert p == m.predict_historical(ts, seed=3, draws=500)
f = m.forecast(ts, seed=3, horizons=[1, 7], draws=200, min_history=50)
assert sorted(f) == ["h1", "h7", "t"] and len(f["t"]) == len(ts) - 49
grid = m.marginal(points=50)
assert len(grid) == 50
assert all(b[1] >= a[1] for a, b in zip(grid, grid[1:]))
"#);
}

#[test]
fn garch_mse_and_errors() {
    run(r#"
ts = gcpv.simulate_garch(4, 0.05, 0.1, 0.85, 600)
g = gcpv.garch_fit(ts.values)
assert 0 <= g["alpha"] < 1 and 0 <= g["beta"] < 1
v = gcpv.garch_forecast(ts.values, g["omega"], g["alpha"], g["beta"], g["sigma0sq"], 5)
assert v > 0
assert gcpv.mse([1.0, 2.0], [1.0, 4.0]) == 2.0
try:
    gcpv.mse([1.0], [1.0, 2.0])
    raise AssertionError("expected ValueError")
except ValueError:
    pass
try:
    gcpv.load_returns("/nonexistent/file.csv")
    raise AssertionError("expected OSError")
except OSError:
    pass
"#);
}

#[test]
fn backtest_returns_report_and_table() {
    run(r#"
import json
ts = gcpv.simulate_jump(5)
report, table = gcpv.backtest(ts, ["gcpv-la", "garch"], seed=1, draws=300)
r = json.loads(report)
assert len(r["rows"]) == 2
assert "GARCH" in table
"#);
}
