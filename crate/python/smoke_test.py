"""Smoke test for the spinsweep Python extension.

Build first with either
    maturin develop -m crates/py/Cargo.toml
or
    cargo build --release -p spinsweep-py --features extension-module
and run `python python/smoke_test.py`.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import spinsweep

        return spinsweep
    except ImportError:
        pass
    for profile in ("release", "debug"):
        for name in ("libspinsweep_py.so", "libspinsweep_py.dylib", "spinsweep_py.dll"):
            lib = ROOT / "target" / profile / name
            if lib.exists():
                loader = importlib.machinery.ExtensionFileLoader("spinsweep", str(lib))
                spec = importlib.util.spec_from_file_location("spinsweep", lib, loader=loader)
                module = importlib.util.module_from_spec(spec)
                loader.exec_module(module)
                sys.modules["spinsweep"] = module
                return module
    sys.exit("spinsweep extension not found; build it first (see module docstring)")


def main():
    s = load()
    cfg = s.Config.default()
    print("modes:", cfg.mode_labels())

    sys_ = cfg.spin_system()
    f = sys_.transition("-7/2", "-5/2", 26.0)
    alc = sys_.find_alc("+7/2", "-5/2", 40.0, 65.0)
    print(f"f(-7/2 -> -5/2, 26 mT) = {f:.4f} GHz, ALC at {alc['b_c_mT']:.2f} mT")
    assert abs(f / 9.45 - 1) < 0.01

    with tempfile.TemporaryDirectory() as out:
        lz = s.run_lz(out, cfg)
        ground = next(p for p in lz["probes"] if p["lower"] == "-7/2")
        print(f"g_down/g_up(-7/2) = {ground['ratio_down_up']:.9f}")
        assert abs(ground["ratio_down_up"] - math.sqrt(2)) < 1e-6

        decay = s.run_decay(out, cfg)
        taus = [p["analysis"]["tau_i_s"] for p in decay["powers"]]
        print("tau_i:", ", ".join(f"{t:.4f}" for t in taus))
        assert all(b < a for a, b in zip(taus, taus[1:]))

        s.run_transmission(out, "WGH211", (42.0, 44.0, 41), (7.445, 7.475, 201), "up", cfg)
        fit = s.run_fit(out, "map", pathlib.Path(out) / "transmission_WGH211.csv")
        g = next(p["value"] for p in fit["params"] if p["name"] == "g_eff_GHz")
        print(f"fitted g_eff = {g * 1e3:.4f} MHz")

        anchors = pathlib.Path(out) / "anchors.toml"
        anchors.write_text(s.ANCHORS_TOML)
        cal = s.run_calibrate(out, anchors)
        print("b20 =", cal["coefficients"]["b20"])

    lam = s.LambdaSystem(100.0, 1.0, 2.0)
    states = lam.propagate([1.0, 0.0, 0.0], lam.time_grid())
    assert max(abs(sum(x) - 1.0) for x in states) < 1e-9
    n = s.concentration(3.7e-3, cfg.g0("WGH311"), cfg)
    print(f"n = {n:.4e} cm^-3")

    try:
        s.run_fit(tempfile.gettempdir(), "map", "/nonexistent/data.csv")
    except FileNotFoundError:
        pass
    else:
        raise AssertionError("missing file not reported")
    print("smoke test passed")


if __name__ == "__main__":
    main()
