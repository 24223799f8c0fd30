//! Scenario commands behind the `spinsweep` binary. Each command reads a
//! [`Config`], writes CSV/JSON outputs into a directory and records a
//! [`RunManifest`] next to them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use spinsweep::cavity::{photon_number, s21, spins_from_resonance, CavityMode, SpinBath};
use spinsweep::config::{Config, ProbeSection};
use spinsweep::dynamics::{
    decay_time_grid, eigen_rates, propagate, pump_rate, rate_matrix, trace_to_transmission,
    DecayAnalysis, DecayTrace, PropagationMethod,
};
use spinsweep::ensemble::{
    energies_at_field, equilibrium_coupling_curve, frozen_state, run_sweep, LzEvent,
    PopulationVector, SweepTrajectory,
};
use spinsweep::fitkit::{
    calibrate_crystal_field, extract_peaks, fit_alc_map, fit_double_exponential, fit_spectrum,
    AlcMapGuess, Anchor, FitResult, GapConvention, SpectrumParam, TransmissionMap,
};
use spinsweep::io::{
    levels_table, map_from_table, map_table, trace_columns, trace_table, trajectory_table, Table,
};
use spinsweep::spectra::{hybridization, transition_between};
use spinsweep::spinham::{LevelDiagram, Mj, StevensCoefficients};
use spinsweep::{Error, Result};

pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NON_CONVERGENCE: i32 = 4;
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. }
        | Error::InvalidParameter { .. }
        | Error::InvalidSpin(_)
        | Error::UnknownLabel(_) => exit::CONFIG,
        Error::NonConvergence { .. }
        | Error::SingularJacobian(_)
        | Error::TrackingAmbiguity { .. } => exit::NON_CONVERGENCE,
        _ => exit::DATA,
    }
}

/// Loaded configuration together with the hash of its source text.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub config: Config,
    pub config_hash: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Ctx {
    /// Reads `path`, or the shipped Gd:YVO4 configuration when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::NotFound(p.display().to_string()),
                _ => Error::Io(format!("{}: {e}", p.display())),
            })?,
            None => spinsweep::config::GD_YVO4_TOML.to_string(),
        };
        Ok(Ctx {
            config: Config::from_toml_str(&text)?,
            config_hash: sha256_hex(text.as_bytes()),
        })
    }

    pub fn from_config(config: Config) -> Result<Self> {
        config.validate()?;
        let text = config.to_toml_string();
        Ok(Ctx {
            config,
            config_hash: sha256_hex(text.as_bytes()),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub timestamp_unix_s: u64,
    pub outputs: Vec<String>,
}

/// Output paths are recorded relative to the output directory.
fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn finish(ctx: &Ctx, out: &Path, command: &str, outputs: &[PathBuf]) -> Result<RunManifest> {
    let manifest = RunManifest {
        command: command.into(),
        config_hash: ctx.config_hash.clone(),
        timestamp_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        outputs: outputs.iter().map(|p| file_name(p)).collect(),
    };
    write_json(&out.join(format!("manifest_{command}.json")), &manifest)?;
    Ok(manifest)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn range_arg(name: &str, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::Config {
            key: name.into(),
            message: format!("range [{lo}, {hi}] is empty or not finite"),
        });
    }
    if n < 1 || (n > 1 && hi == lo) {
        return Err(Error::Config {
            key: name.into(),
            message: format!("need at least one point over a nonempty range, got {n}"),
        });
    }
    Ok(linspace(lo, hi, n))
}

/// Level diagram over `steps` evenly spaced fields.
pub fn cmd_levels(
    ctx: &Ctx,
    b_min: f64,
    b_max: f64,
    steps: usize,
    out: &Path,
) -> Result<LevelDiagram> {
    let grid = range_arg("b_range_mT", b_min, b_max, steps)?;
    let d = ctx.config.spin_system()?.sweep(&grid)?;
    prepare_out(out)?;
    let path = out.join("levels.csv");
    levels_table(&d).write(&path)?;
    finish(ctx, out, "levels", &[path])?;
    Ok(d)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeCoupling {
    pub mode: String,
    pub lower: Mj,
    #[serde(rename = "field_mT")]
    pub field_mt: f64,
    #[serde(rename = "g0_GHz")]
    pub g0_ghz: f64,
    #[serde(rename = "N_up")]
    pub n_up: f64,
    #[serde(rename = "N_down")]
    pub n_down: f64,
    #[serde(rename = "g_up_GHz")]
    pub g_up_ghz: f64,
    #[serde(rename = "g_down_GHz")]
    pub g_down_ghz: f64,
    /// `g_down / g_up`; absent when the level was empty on the way up.
    pub ratio_down_up: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LzSummary {
    #[serde(rename = "N_total")]
    pub n_total: f64,
    #[serde(rename = "T_K")]
    pub t_k: f64,
    pub probes: Vec<ProbeCoupling>,
    pub events: Vec<LzEvent>,
    pub final_fractions: BTreeMap<String, f64>,
    pub max_conservation_error: f64,
}

/// Frozen preparation followed by the configured sweep.
pub fn simulate_protocol(config: &Config) -> Result<SweepTrajectory> {
    let sys = config.spin_system()?;
    let protocol = config.protocol()?;
    let initial = frozen_state(&sys, protocol.temperature_k, config.bath.n_total)?;
    run_sweep(&sys, &protocol, &initial, &config.sweep_options())
}

fn probe_coupling(
    config: &Config,
    label: &str,
    probe: &ProbeSection,
    up: &PopulationVector,
    down: &PopulationVector,
) -> Result<ProbeCoupling> {
    let g0 = config.g0(label)?;
    let n_up = up.get(probe.lower)?;
    let n_down = down.get(probe.lower)?;
    let (g_up, g_down) = (g0 * n_up.sqrt(), g0 * n_down.sqrt());
    Ok(ProbeCoupling {
        mode: label.into(),
        lower: probe.lower,
        field_mt: probe.field_mt,
        g0_ghz: g0,
        n_up,
        n_down,
        g_up_ghz: g_up,
        g_down_ghz: g_down,
        ratio_down_up: (g_up > 0.0).then(|| g_down / g_up),
    })
}

/// Couplings seen by every probe before (upward leg) and after (end state) the sweep.
pub fn cmd_lz(ctx: &Ctx, out: &Path) -> Result<LzSummary> {
    let cfg = &ctx.config;
    let tr = simulate_protocol(cfg)?;
    let down = tr.last();
    let probes = cfg
        .probes()
        .into_iter()
        .map(|(m, p)| probe_coupling(cfg, &m.label, p, tr.up_state_at(p.field_mt), down))
        .collect::<Result<Vec<_>>>()?;
    let summary = LzSummary {
        n_total: cfg.bath.n_total,
        t_k: cfg.protocol.t_k,
        probes,
        events: tr.events.clone(),
        final_fractions: down
            .labels
            .iter()
            .zip(&down.counts)
            .map(|(l, c)| {
                (
                    l.to_string(),
                    if down.total > 0.0 {
                        c / down.total
                    } else {
                        0.0
                    },
                )
            })
            .collect(),
        max_conservation_error: tr.max_conservation_error(),
    };
    prepare_out(out)?;
    let traj = out.join("lz_trajectory.csv");
    trajectory_table(&tr).write(&traj)?;
    let json = out.join("lz_summary.json");
    write_json(&json, &summary)?;
    finish(ctx, out, "lz", &[traj, json])?;
    Ok(summary)
}

/// Frozen (`g_up`), post-sweep (`g_down`) and equilibrium couplings against temperature.
///
/// After the sweep the ensemble has relaxed to thermal equilibrium, so the
/// `g_down` columns are the equilibrium couplings.
pub fn cmd_gtemp(ctx: &Ctx, t_min: f64, t_max: f64, steps: usize, out: &Path) -> Result<Table> {
    let cfg = &ctx.config;
    let temps = range_arg("T_range_K", t_min, t_max, steps)?;
    if temps[0] <= 0.0 {
        return Err(Error::Config {
            key: "T_range_K".into(),
            message: "temperatures must be positive (K)".into(),
        });
    }
    let sys = cfg.spin_system()?;
    let n = cfg.bath.n_total;
    let labels = energies_at_field(&sys, 0.0)?.0;

    let mut header = vec!["T_K".to_string()];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (m, p) in cfg.probes() {
        let g0 = cfg.g0(&m.label)?;
        let eq: Vec<f64> = equilibrium_coupling_curve(&sys, g0, p.lower, p.field_mt, n, &temps)?
            .into_iter()
            .map(|(_, g)| g)
            .collect();
        let up = temps
            .iter()
            .map(|&t| Ok(g0 * frozen_state(&sys, t, n)?.get(p.lower)?.sqrt()))
            .collect::<Result<Vec<f64>>>()?;
        let tag = format!("{}:{}", m.label, p.lower);
        header.push(format!("g_up_GHz[{tag}]"));
        header.push(format!("g_down_GHz[{tag}]"));
        header.push(format!("g_eq_GHz[{tag}]"));
        columns.push(up);
        columns.push(eq.clone());
        columns.push(eq);
    }
    let frozen = temps
        .iter()
        .map(|&t| frozen_state(&sys, t, n))
        .collect::<Result<Vec<_>>>()?;
    for l in &labels {
        header.push(format!("frozen_fraction[{l}]"));
        columns.push(
            frozen
                .iter()
                .map(|p| p.fraction(*l))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let mut table = Table::new(header);
    for (k, t) in temps.iter().enumerate() {
        let mut row = vec![*t];
        row.extend(columns.iter().map(|c| c[k]));
        table.rows.push(row);
    }
    prepare_out(out)?;
    let path = out.join("gtemp.csv");
    table.write(&path)?;
    finish(ctx, out, "gtemp", &[path])?;
    Ok(table)
}

/// Which ensemble state populates the probed level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PopulationSource {
    /// Frozen preparation, as on the upward sweep.
    #[default]
    Up,
    /// End state of the configured sweep.
    Down,
}

impl FromStr for PopulationSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "up" => Ok(PopulationSource::Up),
            "down" => Ok(PopulationSource::Down),
            _ => Err(format!("unknown state `{s}` (expected up or down)")),
        }
    }
}

fn probe_of<'a>(cfg: &'a Config, label: &str) -> Result<&'a ProbeSection> {
    cfg.probes()
        .into_iter()
        .find(|(m, _)| m.label == label)
        .map(|(_, p)| p)
        .ok_or_else(|| Error::Config {
            key: format!("modes.{label}.probe"),
            message: "mode has no probe transition".into(),
        })
}

/// Field grid from zero through every point of `b`, so branch labels match the protocol.
fn tracking_grid(b: &[f64], step: f64) -> Vec<f64> {
    let hi = b.iter().copied().fold(0.0, f64::max).max(step);
    let n = (hi / step).ceil() as usize;
    let mut g: Vec<f64> = (0..=n).map(|k| hi * k as f64 / n as f64).collect();
    g.extend_from_slice(b);
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    g
}

/// Ensemble coupling of a probe for the chosen population source.
pub fn probe_g_eff(cfg: &Config, label: &str, state: PopulationSource) -> Result<f64> {
    let probe = probe_of(cfg, label)?;
    let sys = cfg.spin_system()?;
    let pops = match state {
        PopulationSource::Up => frozen_state(&sys, cfg.protocol.t_k, cfg.bath.n_total)?,
        PopulationSource::Down => simulate_protocol(cfg)?.last().clone(),
    };
    Ok(cfg.g0(label)? * pops.get(probe.lower)?.sqrt())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_transmission(
    ctx: &Ctx,
    mode_label: &str,
    b_range: (f64, f64, usize),
    f_range: (f64, f64, usize),
    state: PopulationSource,
    out: &Path,
) -> Result<TransmissionMap> {
    let cfg = &ctx.config;
    let mode = cfg.mode(mode_label)?;
    let probe = probe_of(cfg, mode_label)?;
    let b = range_arg("b_range_mT", b_range.0, b_range.1, b_range.2)?;
    let f = range_arg("f_range_GHz", f_range.0, f_range.1, f_range.2)?;
    let g_eff = probe_g_eff(cfg, mode_label, state)?;
    let d = cfg
        .spin_system()?
        .sweep(&tracking_grid(&b, cfg.protocol.grid_step_mt))?;
    let values = b
        .iter()
        .map(|&bb| {
            let f_s = transition_between(&d, probe.lower, probe.upper, bb)?.f_ghz;
            let bath = SpinBath {
                f_s_ghz: f_s,
                gamma_s_ghz: cfg.bath.gamma_s_ghz,
                g_eff_ghz: g_eff,
            };
            Ok(f.iter().map(|ff| s21(*ff, &mode, &bath).norm()).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let map = TransmissionMap::new(b, f, values)?;
    prepare_out(out)?;
    let path = out.join(format!("transmission_{mode_label}.csv"));
    map_table(&map).write(&path)?;
    finish(ctx, out, "transmission", &[path])?;
    Ok(map)
}

#[derive(Clone, Debug, Serialize)]
pub struct PowerDecay {
    #[serde(rename = "P_inc_W")]
    pub p_inc_w: f64,
    #[serde(rename = "N_cav")]
    pub n_cav: f64,
    #[serde(rename = "W_per_s")]
    pub w_per_s: f64,
    pub eigenvalues_per_s: [f64; 3],
    pub analysis: Option<DecayAnalysis>,
    pub error: Option<String>,
    pub trace_file: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub mode: String,
    #[serde(rename = "N_initial")]
    pub n_initial: f64,
    pub powers: Vec<PowerDecay>,
}

/// Continuous-pump decay of the probed level for every configured power.
pub fn cmd_decay(ctx: &Ctx, out: &Path) -> Result<DecayReport> {
    let cfg = &ctx.config;
    let label = cfg.dynamics.mode.clone();
    let mode = cfg.mode(&label)?;
    let probe = probe_of(cfg, &label)?;
    let g0 = cfg.g0(&label)?;
    let gamma_s = cfg.bath.gamma_s_ghz;
    let sys = cfg.spin_system()?;
    let n1 = frozen_state(&sys, cfg.protocol.t_k, cfg.bath.n_total)?.get(probe.lower)?;
    prepare_out(out)?;

    let results = cfg
        .dynamics
        .p_inc_w
        .par_iter()
        .enumerate()
        .map(|(i, &p)| -> Result<(PowerDecay, DecayTrace, PathBuf)> {
            let n_cav = photon_number(p, &mode) * cfg.dynamics.photon_number_scale;
            let w = pump_rate(g0, n_cav, gamma_s)?;
            let lam = cfg.lambda_system(w)?;
            let t = decay_time_grid(&lam);
            let prop = propagate(
                &rate_matrix(&lam),
                Vector3::new(n1, 0.0, 0.0),
                &t,
                PropagationMethod::Expm,
            )?;
            let trace = trace_to_transmission(&prop.decay_trace(), &mode, g0, gamma_s, n1);
            let (analysis, error) = match fit_double_exponential(&trace) {
                Ok(a) => (Some(a), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let path = out.join(format!("decay_{i}.csv"));
            let row = PowerDecay {
                p_inc_w: p,
                n_cav,
                w_per_s: w,
                eigenvalues_per_s: eigen_rates(&lam),
                analysis,
                error,
                trace_file: file_name(&path),
            };
            Ok((row, trace, path))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut outputs = Vec::new();
    let mut powers = Vec::new();
    for (row, trace, path) in results {
        trace_table(&trace).write(&path)?;
        outputs.push(path);
        powers.push(row);
    }
    let report = DecayReport {
        mode: label,
        n_initial: n1,
        powers,
    };
    let json = out.join("decay_analysis.json");
    write_json(&json, &report)?;
    outputs.push(json);
    finish(ctx, out, "decay", &outputs)?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitKind {
    Map,
    Spectrum,
    Decay,
}

impl FromStr for FitKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "map" => Ok(FitKind::Map),
            "spectrum" => Ok(FitKind::Spectrum),
            "decay" => Ok(FitKind::Decay),
            _ => Err(format!(
                "unknown fit kind `{s}` (expected map, spectrum or decay)"
            )),
        }
    }
}

impl FitKind {
    fn name(self) -> &'static str {
        match self {
            FitKind::Map => "map",
            FitKind::Spectrum => "spectrum",
            FitKind::Decay => "decay",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum FitOutput {
    Params(FitResult),
    Decay(DecayAnalysis),
}

fn nearest_mode(cfg: &Config, f_center: f64) -> Result<CavityMode> {
    let m = cfg
        .modes
        .iter()
        .min_by(|a, b| {
            (a.f0_ghz - f_center)
                .abs()
                .total_cmp(&(b.f0_ghz - f_center).abs())
        })
        .ok_or_else(|| Error::Config {
            key: "modes".into(),
            message: "no modes configured".into(),
        })?;
    cfg.mode(&m.label)
}

fn pick_mode(cfg: &Config, label: Option<&str>, f_grid: &[f64]) -> Result<CavityMode> {
    match label {
        Some(l) => cfg.mode(l),
        None => nearest_mode(cfg, 0.5 * (f_grid[0] + f_grid[f_grid.len() - 1])),
    }
}

fn fit_spectrum_table(cfg: &Config, table: &Table, mode_label: Option<&str>) -> Result<FitResult> {
    let f = table.column("f_GHz")?;
    let y: Vec<f64> = match (table.column("s21_abs"), table.column("s21_db")) {
        (Ok(a), _) => a,
        (Err(_), Ok(db)) => db.into_iter().map(spinsweep::cavity::from_db).collect(),
        _ => {
            return Err(Error::Data(
                "spectrum needs an s21_abs or s21_db column".into(),
            ))
        }
    };
    if f.is_empty() {
        return Err(Error::Data("spectrum has no rows".into()));
    }
    let mode = pick_mode(cfg, mode_label, &f)?;
    let single = TransmissionMap::new(vec![0.0], f.clone(), vec![y.clone()])?;
    let peaks = &extract_peaks(&single, cfg.fit.prominence)[0];
    if peaks.f_ghz.len() >= 2 {
        let mut idx: Vec<usize> = (0..peaks.f_ghz.len()).collect();
        idx.sort_by(|&a, &b| peaks.height[b].total_cmp(&peaks.height[a]));
        let (a, b) = (peaks.f_ghz[idx[0]], peaks.f_ghz[idx[1]]);
        let bath = SpinBath::new(0.5 * (a + b), cfg.bath.gamma_s_ghz, 0.5 * (a - b).abs())?;
        let mode = CavityMode {
            f0_ghz: 0.5 * (a + b),
            ..mode
        };
        fit_spectrum(&f, &y, &mode, &bath, &SpectrumParam::ALL)
    } else {
        let bath = SpinBath::new(mode.f0_ghz, cfg.bath.gamma_s_ghz, 0.0)?;
        let mode = match peaks.f_ghz.first() {
            Some(p) => CavityMode { f0_ghz: *p, ..mode },
            None => mode,
        };
        fit_spectrum(
            &f,
            &y,
            &mode,
            &bath,
            &[
                SpectrumParam::KappaC,
                SpectrumParam::GammaD,
                SpectrumParam::F0,
            ],
        )
    }
}

fn decay_trace_from_table(cfg: &Config, table: &Table) -> Result<DecayTrace> {
    let cols = trace_columns(table)?;
    let n1 = match (cols.n1, cols.s21) {
        (Some(n1), _) => n1,
        (None, Some(s)) => {
            let label = &cfg.dynamics.mode;
            let mode = cfg.mode(label)?;
            let g0 = cfg.g0(label)?;
            let spins: Vec<f64> = s
                .iter()
                .map(|v| spins_from_resonance(&mode, g0, cfg.bath.gamma_s_ghz, *v).max(0.0))
                .collect();
            let s0 = spins.first().copied().unwrap_or(0.0);
            if !(s0 > 0.0) {
                return Err(Error::Data(
                    "first transmission sample implies no spins in the probed level".into(),
                ));
            }
            spins.into_iter().map(|v| v / s0).collect()
        }
        (None, None) => unreachable!("trace_columns requires one of the columns"),
    };
    DecayTrace::new(cols.t, n1, None)
}

pub fn cmd_fit(
    ctx: &Ctx,
    kind: FitKind,
    data: &Path,
    mode_label: Option<&str>,
    out: &Path,
) -> Result<FitOutput> {
    let cfg = &ctx.config;
    let table = Table::read(data)?;
    let result = match kind {
        FitKind::Map => {
            let map = map_from_table(&table)?;
            let guess = AlcMapGuess {
                mode: pick_mode(cfg, mode_label, &map.f_grid)?,
                gamma_s_ghz: cfg.bath.gamma_s_ghz,
                slope_ghz_per_mt: cfg.fit.slope_guess_ghz_per_mt,
            };
            FitOutput::Params(fit_alc_map(&map, &guess, &cfg.map_fit_options())?)
        }
        FitKind::Spectrum => FitOutput::Params(fit_spectrum_table(cfg, &table, mode_label)?),
        FitKind::Decay => FitOutput::Decay(fit_double_exponential(&decay_trace_from_table(
            cfg, &table,
        )?)?),
    };
    prepare_out(out)?;
    let path = out.join(format!("fit_{}.json", kind.name()));
    write_json(&path, &result)?;
    finish(ctx, out, "fit", &[path])?;
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(rename = "b20_GHz", default)]
    pub b20_ghz: f64,
    #[serde(rename = "b40_GHz", default)]
    pub b40_ghz: f64,
    #[serde(rename = "b60_GHz", default)]
    pub b60_ghz: f64,
    #[serde(rename = "b44_GHz", default)]
    pub b44_ghz: f64,
    #[serde(rename = "b64_GHz", default)]
    pub b64_ghz: f64,
}

impl PriorSection {
    fn coefficients(&self) -> StevensCoefficients {
        StevensCoefficients {
            b20: self.b20_ghz,
            b40: self.b40_ghz,
            b60: self.b60_ghz,
            b44: self.b44_ghz,
            b64: self.b64_ghz,
        }
    }
}

/// Calibration input: anchors plus optional prior and settings overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorsFile {
    #[serde(default)]
    pub regularization: Option<f64>,
    #[serde(default)]
    pub gap_convention: Option<GapConvention>,
    /// Defaults to the configured coefficients.
    #[serde(default)]
    pub prior: Option<PriorSection>,
    #[serde(default)]
    pub anchors: Vec<Anchor>,
}

impl AnchorsFile {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| Error::Data(format!("{source}: {}", e.to_string().trim_end())))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AnchorReport {
    pub anchor: Anchor,
    pub target: f64,
    pub predicted: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub coefficients: StevensCoefficients,
    pub fit: FitResult,
    pub anchors: Vec<AnchorReport>,
}

pub fn cmd_calibrate(ctx: &Ctx, anchors_path: &Path, out: &Path) -> Result<CalibrationReport> {
    let cfg = &ctx.config;
    let text = std::fs::read_to_string(anchors_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(anchors_path.display().to_string()),
        _ => io_err(anchors_path, e),
    })?;
    let file = AnchorsFile::parse(&text, &anchors_path.display().to_string())?;
    if file.anchors.is_empty() {
        return Err(Error::Data(format!(
            "{}: no [[anchors]] entries",
            anchors_path.display()
        )));
    }
    let prior = file
        .prior
        .as_ref()
        .map_or_else(|| cfg.coefficients(), PriorSection::coefficients);
    let mut settings = cfg.calibration_settings();
    if let Some(r) = file.regularization {
        settings.regularization = r;
    }
    if let Some(c) = file.gap_convention {
        settings.convention = c;
    }
    let base = spinsweep::spinham::SpinSystem {
        cf: prior,
        ..cfg.spin_system()?
    };
    let cal = calibrate_crystal_field(&base, &file.anchors, prior, &settings)?;

    let report = CalibrationReport {
        coefficients: cal.coefficients,
        fit: cal.fit.clone(),
        anchors: file
            .anchors
            .iter()
            .zip(&cal.predictions)
            .map(|(a, p)| AnchorReport {
                anchor: a.clone(),
                target: a.target(),
                predicted: *p,
            })
            .collect(),
    };
    let mut spin = cfg.spin.clone();
    spin.b20_ghz = cal.coefficients.b20;
    spin.b40_ghz = cal.coefficients.b40;
    spin.b60_ghz = cal.coefficients.b60;
    spin.b44_ghz = cal.coefficients.b44;
    spin.b64_ghz = cal.coefficients.b64;
    let mut fragment = BTreeMap::new();
    fragment.insert("spin", spin);
    let toml_text = toml::to_string(&fragment).map_err(|e| Error::Data(e.to_string()))?;

    prepare_out(out)?;
    let toml_path = out.join("calibrated.toml");
    std::fs::write(&toml_path, toml_text).map_err(|e| io_err(&toml_path, e))?;
    let json = out.join("calibration.json");
    write_json(&json, &report)?;
    finish(ctx, out, "calibrate", &[toml_path, json])?;
    Ok(report)
}

/// Weight of `minor` in the branch labelled `branch` at `b_mt`, tracked from zero field.
pub fn hybridization_weight(config: &Config, branch: Mj, minor: Mj, b_mt: f64) -> Result<f64> {
    let d = config
        .spin_system()?
        .sweep(&tracking_grid(&[b_mt], config.protocol.grid_step_mt))?;
    Ok(hybridization(&d, branch, b_mt)?.weight(minor))
}
