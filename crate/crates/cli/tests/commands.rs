//! End-to-end behaviour of the scenario commands and the binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use spinsweep::config::{Config, GD_YVO4_ANCHORS_TOML};
use spinsweep::io::Table;
use spinsweep::Error;
use spinsweep_cli::{
    cmd_calibrate, cmd_decay, cmd_fit, cmd_gtemp, cmd_levels, cmd_lz, cmd_transmission, exit,
    exit_code, Ctx, FitKind, FitOutput, PopulationSource, RunManifest,
};

fn ctx() -> Ctx {
    Ctx::load(None).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinsweep"))
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn manifest(dir: &Path, cmd: &str) -> RunManifest {
    serde_json::from_slice(&std::fs::read(dir.join(format!("manifest_{cmd}.json"))).unwrap())
        .unwrap()
}

fn run_all(ctx: &Ctx, out: &Path) {
    cmd_levels(ctx, 0.0, 100.0, 201, out).unwrap();
    cmd_lz(ctx, out).unwrap();
    cmd_gtemp(ctx, 0.02, 0.2, 5, out).unwrap();
    cmd_transmission(
        ctx,
        "WGH211",
        (42.5, 43.5, 21),
        (7.445, 7.475, 101),
        PopulationSource::Up,
        out,
    )
    .unwrap();
    cmd_decay(ctx, out).unwrap();
}

#[test]
fn reruns_are_identical_apart_from_timestamps() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all(&ctx(), a.path());
    run_all(&ctx(), b.path());
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.len() >= 15);
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        if name.starts_with("manifest_") {
            let strip = |b: &[u8]| {
                let mut v: serde_json::Value = serde_json::from_slice(b).unwrap();
                v.as_object_mut().unwrap().remove("timestamp_unix_s");
                v
            };
            assert_eq!(strip(bytes), strip(&fb[name]), "{name}");
        } else {
            assert!(bytes == &fb[name], "{name} differs between runs");
        }
    }
}

#[test]
fn every_command_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    run_all(&ctx(), dir.path());
    for cmd in ["levels", "lz", "gtemp", "transmission", "decay"] {
        let m = manifest(dir.path(), cmd);
        assert_eq!(m.command, cmd);
        assert_eq!(m.config_hash.len(), 64);
        assert!(m.outputs.iter().all(|o| dir.path().join(o).exists()));
    }
}

#[test]
fn two_steps_give_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    cmd_levels(&ctx(), 0.0, 100.0, 2, dir.path()).unwrap();
    let t = Table::read(&dir.path().join("levels.csv")).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.header.len(), 9);
    assert_eq!(t.header[1], "E1_GHz[-7/2]");
}

#[test]
fn turning_below_the_crossing_leaves_couplings_unchanged() {
    let mut cfg = Config::default_gd_yvo4();
    cfg.protocol.b_turn_mt = 45.0;
    let dir = tempfile::tempdir().unwrap();
    let s = cmd_lz(&Ctx::from_config(cfg).unwrap(), dir.path()).unwrap();
    for p in &s.probes {
        let r = p.ratio_down_up.unwrap();
        assert!((r - 1.0).abs() < 1e-9, "{}: ratio {r}", p.mode);
    }
}

#[test]
fn gtemp_properties() {
    let ctx = ctx();
    let dir = tempfile::tempdir().unwrap();
    let t = cmd_gtemp(&ctx, 0.005, 0.045, 9, dir.path()).unwrap();
    for tag in ["WGH311:-7/2", "WGH211:+7/2"] {
        let down = t.column(&format!("g_down_GHz[{tag}]")).unwrap();
        let eq = t.column(&format!("g_eq_GHz[{tag}]")).unwrap();
        for (d, e) in down.iter().zip(&eq) {
            assert!((d - e).abs() <= 1e-9 * e.abs());
        }
    }
    // the frozen state is symmetric in ±m, so the normalized couplings agree
    let g311 = ctx.config.g0("WGH311").unwrap();
    let g211 = ctx.config.g0("WGH211").unwrap();
    let a = t.column("g_up_GHz[WGH311:-7/2]").unwrap();
    let b = t.column("g_up_GHz[WGH211:+7/2]").unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x / g311 - y / g211).abs() <= 1e-12 * (x / g311));
    }

    let hot = cmd_gtemp(&ctx, 50.0, 100.0, 3, dir.path()).unwrap();
    for (i, h) in hot.header.iter().enumerate() {
        if h.starts_with("frozen_fraction") {
            for row in &hot.rows {
                assert!((row[i] * 8.0 - 1.0).abs() < 0.01, "{h}: {}", row[i]);
            }
        }
    }
}

#[test]
fn zero_power_decay_is_flat() {
    let mut cfg = Config::default_gd_yvo4();
    cfg.dynamics.p_inc_w = vec![0.0];
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_decay(&Ctx::from_config(cfg).unwrap(), dir.path()).unwrap();
    assert_eq!(r.powers[0].w_per_s, 0.0);
    let t = Table::read(&dir.path().join("decay_0.csv")).unwrap();
    let n1 = t.column("n1_fraction").unwrap();
    assert!(n1.iter().all(|v| *v == 1.0));
    let s = t.column("s21_abs").unwrap();
    assert!(s.iter().all(|v| *v == s[0]));
}

#[test]
fn decay_fit_reads_its_own_traces() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = ctx();
    let report = cmd_decay(&ctx, dir.path()).unwrap();
    let FitOutput::Decay(a) = cmd_fit(
        &ctx,
        FitKind::Decay,
        &dir.path().join("decay_2.csv"),
        None,
        dir.path(),
    )
    .unwrap() else {
        panic!("decay fit returns a decay analysis");
    };
    let direct = report.powers[2].analysis.as_ref().unwrap();
    assert!((a.tau_i / direct.tau_i - 1.0).abs() < 1e-9);

    // transmission alone is converted back to occupations
    let t = Table::read(&dir.path().join("decay_2.csv")).unwrap();
    let mut only_s21 = Table::new(vec!["t_s".into(), "s21_abs".into()]);
    only_s21.rows = t.rows.iter().map(|r| vec![r[0], r[2]]).collect();
    let path = dir.path().join("s21_only.csv");
    only_s21.write(&path).unwrap();
    let FitOutput::Decay(b) = cmd_fit(&ctx, FitKind::Decay, &path, None, dir.path()).unwrap()
    else {
        panic!("decay fit returns a decay analysis");
    };
    assert!((b.tau_i / direct.tau_i - 1.0).abs() < 1e-6);
}

#[test]
fn map_fit_reads_transmission_output() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = ctx();
    cmd_transmission(
        &ctx,
        "WGH211",
        (42.0, 44.0, 61),
        (7.445, 7.475, 301),
        PopulationSource::Up,
        dir.path(),
    )
    .unwrap();
    let g_true = spinsweep_cli::probe_g_eff(&ctx.config, "WGH211", PopulationSource::Up).unwrap();
    let FitOutput::Params(fit) = cmd_fit(
        &ctx,
        FitKind::Map,
        &dir.path().join("transmission_WGH211.csv"),
        None,
        dir.path(),
    )
    .unwrap() else {
        panic!("map fit returns parameters");
    };
    assert!((fit.get("g_eff_GHz").unwrap() / g_true - 1.0).abs() < 0.01);
}

#[test]
fn malformed_csv_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "t_s,n1_fraction\n0,1\n0.1,0.5\n0.2,oops\n").unwrap();
    let err = cmd_fit(&ctx(), FitKind::Decay, &path, None, dir.path()).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    assert!(err.to_string().contains("row 4"), "{err}");
    assert_eq!(exit_code(&err), exit::DATA);
}

#[test]
fn missing_file_is_reported_as_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_fit(
        &ctx(),
        FitKind::Map,
        &dir.path().join("absent.csv"),
        None,
        dir.path(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::NotFound(_)), "{err}");
}

fn write_anchors(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("anchors.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn empty_anchor_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_anchors(dir.path(), "regularization = 1.0\n");
    let err = cmd_calibrate(&ctx(), &p, dir.path()).unwrap_err();
    assert!(err.to_string().contains("no [[anchors]]"), "{err}");
}

#[test]
fn self_generated_anchors_are_recovered_exactly() {
    let ctx = ctx();
    let truth = ctx.config.coefficients();
    let sys = ctx.config.spin_system().unwrap();
    let shapes = [
        (
            "transition",
            "from = \"-7/2\"\nto = \"-5/2\"\nfield_mT = 26.0",
            "f_GHz",
        ),
        (
            "transition",
            "from = \"+7/2\"\nto = \"+5/2\"\nfield_mT = 43.0",
            "f_GHz",
        ),
        (
            "transition",
            "from = \"-5/2\"\nto = \"-3/2\"\nfield_mT = 10.0",
            "f_GHz",
        ),
        (
            "transition",
            "from = \"+3/2\"\nto = \"+1/2\"\nfield_mT = 80.0",
            "f_GHz",
        ),
        (
            "transition",
            "from = \"-1/2\"\nto = \"+1/2\"\nfield_mT = 120.0",
            "f_GHz",
        ),
        (
            "alc_center",
            "a = \"+7/2\"\nb = \"-5/2\"\nlo_mT = 40.0\nhi_mT = 65.0",
            "b_c_mT",
        ),
        (
            "coupling",
            "a = \"+5/2\"\nb = \"-3/2\"\nlo_mT = 30.0\nhi_mT = 75.0",
            "value_GHz",
        ),
    ];
    let mut text = String::from("regularization = 0.0\n\n[prior]\n");
    for (k, v) in ["b20", "b40", "b60", "b44", "b64"]
        .iter()
        .zip(truth.to_array())
    {
        text.push_str(&format!("{k}_GHz = {}\n", v * 0.97));
    }
    for (kind, body, target) in shapes {
        let entry = format!("kind = \"{kind}\"\n{body}\n{target} = 0.0\n");
        let anchor: spinsweep::fitkit::Anchor = toml::from_str(&entry).unwrap();
        let value = anchor.predict(&sys, Default::default()).unwrap();
        text.push_str(&format!(
            "\n[[anchors]]\nkind = \"{kind}\"\n{body}\n{target} = {value:e}\n"
        ));
    }
    let dir = tempfile::tempdir().unwrap();
    let p = write_anchors(dir.path(), &text);
    let r = cmd_calibrate(&ctx, &p, dir.path()).unwrap();
    for (got, want) in r.coefficients.to_array().iter().zip(truth.to_array()) {
        assert!((got / want - 1.0).abs() < 1e-6, "{got} vs {want}");
    }
    for a in &r.anchors {
        assert!((a.predicted - a.target).abs() < 1e-8 * a.target.abs().max(1.0));
    }
}

#[test]
fn single_anchor_with_strong_prior_returns_the_prior() {
    let text = "regularization = 1e12\n\n[prior]\nb20_GHz = -0.48\nb44_GHz = -0.0015\n\n[[anchors]]\nkind = \"transition\"\nfrom = \"-7/2\"\nto = \"-5/2\"\nfield_mT = 26.0\nf_GHz = 9.0\n";
    let dir = tempfile::tempdir().unwrap();
    let p = write_anchors(dir.path(), text);
    let r = cmd_calibrate(&ctx(), &p, dir.path()).unwrap();
    let c = r.coefficients;
    assert!((c.b20 / -0.48 - 1.0).abs() < 1e-6 && (c.b44 / -0.0015 - 1.0).abs() < 1e-6);
    assert!(c.b40.abs() < 1e-9 && c.b60.abs() < 1e-9 && c.b64.abs() < 1e-9);
}

#[test]
fn shipped_anchors_parse() {
    let f = spinsweep_cli::AnchorsFile::parse(GD_YVO4_ANCHORS_TOML, "shipped").unwrap();
    assert_eq!(f.anchors.len(), 4);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = bin()
        .args([
            "--out",
            dir.path().to_str().unwrap(),
            "levels",
            "--steps",
            "3",
        ])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(exit::OK));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        Config::default_gd_yvo4()
            .to_toml_string()
            .replace("gamma_s_GHz = 0.001", "gamma_s_GHz = -0.001"),
    )
    .unwrap();
    let bad = bin()
        .args(["--config", cfg.to_str().unwrap(), "lz"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(exit::CONFIG));
    let msg = String::from_utf8_lossy(&bad.stderr);
    assert!(
        msg.contains("bath.gamma_s_GHz") && msg.contains("(GHz)"),
        "{msg}"
    );

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(
        &unknown,
        format!(
            "{}\n[extra]\nx = 1\n",
            Config::default_gd_yvo4().to_toml_string()
        ),
    )
    .unwrap();
    let out = bin()
        .args(["--config", unknown.to_str().unwrap(), "lz"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(exit::CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));

    let missing = bin()
        .args([
            "--out",
            dir.path().to_str().unwrap(),
            "fit",
            "--kind",
            "map",
            "--data",
            "/nonexistent/x.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(exit::DATA));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("not found"));

    let flat = dir.path().join("flat.csv");
    std::fs::write(
        &flat,
        "t_s,n1_fraction\n0,1\n1,1\n2,1\n3,1\n4,1\n5,1\n6,1\n7,1\n",
    )
    .unwrap();
    let out = bin()
        .args([
            "--out",
            dir.path().to_str().unwrap(),
            "fit",
            "--kind",
            "decay",
            "--data",
            flat.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(exit::DATA));
}

#[test]
fn nonconvergence_maps_to_its_own_code() {
    let e = Error::NonConvergence {
        iterations: 10,
        residual: 1.0,
    };
    assert_eq!(exit_code(&e), exit::NON_CONVERGENCE);
    assert_eq!(
        exit_code(&Error::Config {
            key: "k".into(),
            message: "m".into()
        }),
        exit::CONFIG
    );
}
