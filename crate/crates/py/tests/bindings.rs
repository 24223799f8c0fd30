//! Drives the bindings through an embedded interpreter.

use pyo3::ffi::c_str;
use pyo3::prelude::*;

fn with_module(code: &std::ffi::CStr) {
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(spinsweep_py::spinsweep_module)(py);
        py.import("sys")
            .unwrap()
            .getattr("modules")
            .unwrap()
            .set_item("spinsweep", m)
            .unwrap();
        if let Err(e) = py.run(code, None, None) {
            e.print(py);
            panic!("python check failed");
        }
    });
}

#[test]
fn level_structure_and_sweep() {
    with_module(c_str!(
        r#"
import math
import spinsweep as s
cfg = s.Config.default()
sys = cfg.spin_system()
e = sys.energies(0.0)
assert len(e) == 8 and e == sorted(e)
labels, levels = sys.levels([0.0, 10.0, 20.0])
assert labels[0] == "-7/2" and len(levels) == 3
alc = sys.find_alc("+7/2", "-5/2", 40.0, 65.0)
assert 51.0 < alc["b_c_mT"] < 53.0
assert abs(alc["gap_GHz"] - 2 * alc["g_lz_GHz"]) < 1e-15
traj = s.simulate_protocol(cfg)
assert traj["max_conservation_error"] < 1e-9
assert len(traj["counts"]) == len(traj["b_mT"])
assert 0.0 <= s.lz_probability(1e-6, 0.03, 2.0) <= 1.0
"#
    ));
}

#[test]
fn dynamics_and_fits() {
    with_module(c_str!(
        r#"
import math
import spinsweep as s
lam = s.LambdaSystem(100.0, 1.0, 2.0)
assert all(abs(sum(col)) == 0.0 for col in zip(*lam.rate_matrix()))
r = lam.eigen_rates()
assert abs(r[2] - (-103 - math.sqrt(9809)) / 2) < 1e-10
t = lam.time_grid()
states = lam.propagate([1.0, 0.0, 0.0], t)
a = s.analyze_decay(t, [x[0] for x in states])
assert abs(a["tau_f_s"] * abs(r[1]) - 1) < 0.1

mode = s.CavityMode("m", 7.46, 5e-5, 1e-4, 0.5)
b = [42.0 + 2.0 * k / 60 for k in range(61)]
f = [7.445 + 0.03 * k / 300 for k in range(301)]
values = s.synthetic_alc_map(mode, 1e-3, 2.6e-3, 43.0, 0.028, b, f)
fit = dict(s.fit_alc_map(b, f, values, mode, 1.5e-3, 0.02))
assert abs(fit["g_eff_GHz"] / 2.6e-3 - 1) < 1e-3

try:
    s.Config.from_toml("[spin]\nS = 3.5\n")
except ValueError as e:
    assert "missing field" in str(e)
else:
    raise AssertionError("incomplete config accepted")
"#
    ));
}
