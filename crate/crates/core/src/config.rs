//! TOML run configuration. Every key carries its unit in its name; unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cavity::{single_spin_coupling, CavityMode, CrystalSpec};
use crate::dynamics::LambdaSystem;
use crate::ensemble::{default_relaxation, SweepOptions, SweepProtocol};
use crate::error::{Error, Result};
use crate::fitkit::{CalibrationSettings, GapConvention, MapFitOptions};
use crate::spinham::{Mj, Spin, SpinSystem, StevensCoefficients};

/// Default configuration for Gd3+ in YVO4.
pub const GD_YVO4_TOML: &str = include_str!("../data/gd_yvo4.toml");
/// Level-structure anchors for the shipped system, in the calibration file format.
pub const GD_YVO4_ANCHORS_TOML: &str = include_str!("../data/gd_yvo4_anchors.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub spin: SpinSection,
    pub crystal: CrystalSection,
    pub modes: Vec<ModeSection>,
    pub bath: BathSection,
    pub protocol: ProtocolSection,
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub fit: FitSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSection {
    #[serde(rename = "S")]
    pub s: f64,
    pub g_factor: f64,
    #[serde(rename = "b20_GHz")]
    pub b20_ghz: f64,
    #[serde(rename = "b40_GHz")]
    pub b40_ghz: f64,
    #[serde(rename = "b60_GHz")]
    pub b60_ghz: f64,
    #[serde(rename = "b44_GHz")]
    pub b44_ghz: f64,
    #[serde(rename = "b64_GHz")]
    pub b64_ghz: f64,
    #[serde(default)]
    pub tilt_rad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    pub diameter_mm: f64,
    pub height_mm: f64,
    #[serde(default = "one")]
    pub mu_r: f64,
}

/// Transition a mode is tuned to, identified by its lower and upper level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub lower: Mj,
    pub upper: Mj,
    #[serde(rename = "field_mT")]
    pub field_mt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub label: String,
    #[serde(rename = "f0_GHz")]
    pub f0_ghz: f64,
    #[serde(rename = "kappa_c_GHz")]
    pub kappa_c_ghz: f64,
    #[serde(rename = "gamma_d_GHz")]
    pub gamma_d_ghz: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    #[serde(rename = "gamma_s_GHz")]
    pub gamma_s_ghz: f64,
    #[serde(rename = "N_total")]
    pub n_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(rename = "b_start_mT")]
    pub b_start_mt: f64,
    #[serde(rename = "b_turn_mT")]
    pub b_turn_mt: f64,
    #[serde(rename = "b_end_mT")]
    pub b_end_mt: f64,
    #[serde(rename = "rate_mT_per_min")]
    pub rate_mt_per_min: f64,
    #[serde(rename = "T_K")]
    pub t_k: f64,
    /// `"from->to"` pairs; the single-photon cascade when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relax_fast: Option<Vec<String>>,
    #[serde(rename = "grid_step_mT", default = "grid_step")]
    pub grid_step_mt: f64,
    #[serde(rename = "alc_half_window_mT", default = "alc_window")]
    pub alc_half_window_mt: f64,
    #[serde(rename = "slope_inner_mT", default = "slope_inner")]
    pub slope_inner_mt: f64,
    #[serde(rename = "slope_outer_mT", default = "slope_outer")]
    pub slope_outer_mt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    /// Label of the pumping and probing mode.
    pub mode: String,
    #[serde(rename = "P_inc_W")]
    pub p_inc_w: Vec<f64>,
    pub gamma21_per_s: f64,
    pub gamma23_per_s: f64,
    /// Multiplier on the driven-cavity photon number.
    #[serde(default = "one")]
    pub photon_number_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub prominence: f64,
    #[serde(rename = "slope_guess_GHz_per_mT")]
    pub slope_guess_ghz_per_mt: f64,
    pub regularization: f64,
    pub gap_convention: GapConvention,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            prominence: MapFitOptions::default().prominence,
            slope_guess_ghz_per_mt: 0.028,
            regularization: CalibrationSettings::default().regularization,
            gap_convention: GapConvention::HalfGap,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn grid_step() -> f64 {
    SweepOptions::default().grid_step_mt
}
fn alc_window() -> f64 {
    SweepOptions::default().alc_half_window_mt
}
fn slope_inner() -> f64 {
    SweepOptions::default().slope_inner_mt
}
fn slope_outer() -> f64 {
    SweepOptions::default().slope_outer_mt
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

fn positive(key: &str, v: f64, unit: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(
            key,
            format!("must be a positive number ({unit}), got {v}"),
        ))
    }
}

fn non_negative(key: &str, v: f64, unit: &str) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be >= 0 ({unit}), got {v}")))
    }
}

fn finite(key: &str, v: f64, unit: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be a finite number ({unit})")))
    }
}

fn parse_relax(entry: &str) -> Result<(Mj, Mj)> {
    let key = "protocol.relax_fast";
    let (a, b) = entry.split_once("->").ok_or_else(|| {
        bad(
            key,
            format!("`{entry}` is not of the form \"from->to\" (level labels such as -5/2)"),
        )
    })?;
    let a: Mj = a
        .trim()
        .parse()
        .map_err(|e: Error| bad(key, e.to_string()))?;
    let b: Mj = b
        .trim()
        .parse()
        .map_err(|e: Error| bad(key, e.to_string()))?;
    Ok((a, b))
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
                .unwrap_or("<toml>")
                .to_string();
            Error::Config {
                key,
                message: e.to_string().trim_end().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
            _ => Error::Io(format!("{}: {e}", path.display())),
        })?;
        Config::from_toml_str(&text)
    }

    pub fn default_gd_yvo4() -> Self {
        Config::from_toml_str(GD_YVO4_TOML).expect("shipped config is valid")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.spin;
        Spin::new(s.s).map_err(|_| {
            bad(
                "spin.S",
                format!("2S+1 must be an integer >= 2 (dimensionless), got {}", s.s),
            )
        })?;
        positive("spin.g_factor", s.g_factor, "dimensionless")?;
        for (k, v) in [
            ("spin.b20_GHz", s.b20_ghz),
            ("spin.b40_GHz", s.b40_ghz),
            ("spin.b60_GHz", s.b60_ghz),
            ("spin.b44_GHz", s.b44_ghz),
            ("spin.b64_GHz", s.b64_ghz),
        ] {
            finite(k, v, "GHz")?;
        }
        finite("spin.tilt_rad", s.tilt_rad, "rad")?;

        positive("crystal.diameter_mm", self.crystal.diameter_mm, "mm")?;
        positive("crystal.height_mm", self.crystal.height_mm, "mm")?;
        positive("crystal.mu_r", self.crystal.mu_r, "dimensionless")?;

        if self.modes.is_empty() {
            return Err(bad("modes", "at least one [[modes]] entry is required"));
        }
        for (i, m) in self.modes.iter().enumerate() {
            let k = |f: &str| format!("modes[{i}].{f}");
            positive(&k("f0_GHz"), m.f0_ghz, "GHz")?;
            positive(&k("kappa_c_GHz"), m.kappa_c_ghz, "GHz")?;
            positive(&k("gamma_d_GHz"), m.gamma_d_ghz, "GHz")?;
            if !(m.beta > 0.0 && m.beta <= 1.0) {
                return Err(bad(
                    &k("beta"),
                    format!("must lie in (0, 1] (dimensionless), got {}", m.beta),
                ));
            }
            if self.modes[..i].iter().any(|o| o.label == m.label) {
                return Err(bad(
                    &k("label"),
                    format!("duplicate mode label `{}`", m.label),
                ));
            }
            if let Some(p) = &m.probe {
                non_negative(&k("probe.field_mT"), p.field_mt, "mT")?;
            }
        }

        positive("bath.gamma_s_GHz", self.bath.gamma_s_ghz, "GHz")?;
        non_negative("bath.N_total", self.bath.n_total, "spins")?;

        let p = &self.protocol;
        for (k, v) in [
            ("protocol.b_start_mT", p.b_start_mt),
            ("protocol.b_turn_mT", p.b_turn_mt),
            ("protocol.b_end_mT", p.b_end_mt),
        ] {
            non_negative(k, v, "mT")?;
        }
        if p.b_start_mt > p.b_turn_mt || p.b_end_mt > p.b_turn_mt {
            return Err(bad(
                "protocol.b_turn_mT",
                "must not be below b_start_mT or b_end_mT (mT)",
            ));
        }
        positive("protocol.rate_mT_per_min", p.rate_mt_per_min, "mT/min")?;
        positive("protocol.T_K", p.t_k, "K")?;
        positive("protocol.grid_step_mT", p.grid_step_mt, "mT")?;
        positive("protocol.alc_half_window_mT", p.alc_half_window_mt, "mT")?;
        positive("protocol.slope_inner_mT", p.slope_inner_mt, "mT")?;
        if !(p.slope_outer_mt > p.slope_inner_mt) {
            return Err(bad(
                "protocol.slope_outer_mT",
                "must exceed slope_inner_mT (mT)",
            ));
        }
        self.protocol()?
            .validate()
            .map_err(|e| bad("protocol.relax_fast", e.to_string()))?;

        let d = &self.dynamics;
        self.mode(&d.mode)
            .map_err(|_| bad("dynamics.mode", format!("no mode labelled `{}`", d.mode)))?;
        for (i, w) in d.p_inc_w.iter().enumerate() {
            non_negative(&format!("dynamics.P_inc_W[{i}]"), *w, "W")?;
        }
        non_negative("dynamics.gamma21_per_s", d.gamma21_per_s, "1/s")?;
        non_negative("dynamics.gamma23_per_s", d.gamma23_per_s, "1/s")?;
        positive(
            "dynamics.photon_number_scale",
            d.photon_number_scale,
            "dimensionless",
        )?;

        positive(
            "fit.prominence",
            self.fit.prominence,
            "fraction of map maximum",
        )?;
        positive(
            "fit.slope_guess_GHz_per_mT",
            self.fit.slope_guess_ghz_per_mt,
            "GHz/mT",
        )?;
        non_negative(
            "fit.regularization",
            self.fit.regularization,
            "dimensionless",
        )?;
        Ok(())
    }

    pub fn coefficients(&self) -> StevensCoefficients {
        let s = &self.spin;
        StevensCoefficients {
            b20: s.b20_ghz,
            b40: s.b40_ghz,
            b60: s.b60_ghz,
            b44: s.b44_ghz,
            b64: s.b64_ghz,
        }
    }

    pub fn spin_system(&self) -> Result<SpinSystem> {
        SpinSystem::new(
            Spin::new(self.spin.s)?,
            self.spin.g_factor,
            self.coefficients(),
            self.spin.tilt_rad,
        )
    }

    pub fn crystal(&self) -> Result<CrystalSpec> {
        CrystalSpec::new(
            self.crystal.diameter_mm,
            self.crystal.height_mm,
            self.crystal.mu_r,
        )
    }

    pub fn mode(&self, label: &str) -> Result<CavityMode> {
        let m = self
            .modes
            .iter()
            .find(|m| m.label == label)
            .ok_or_else(|| bad("modes", format!("no mode labelled `{label}`")))?;
        CavityMode::new(
            m.label.clone(),
            m.f0_ghz,
            m.kappa_c_ghz,
            m.gamma_d_ghz,
            m.beta,
        )
    }

    /// Modes that carry a probe transition, in file order.
    pub fn probes(&self) -> Vec<(&ModeSection, &ProbeSection)> {
        self.modes
            .iter()
            .filter_map(|m| m.probe.as_ref().map(|p| (m, p)))
            .collect()
    }

    /// Single-spin coupling to the labelled mode, GHz.
    pub fn g0(&self, label: &str) -> Result<f64> {
        Ok(single_spin_coupling(
            self.spin.g_factor,
            &self.mode(label)?,
            &self.crystal()?,
        ))
    }

    pub fn protocol(&self) -> Result<SweepProtocol> {
        let p = &self.protocol;
        let relax_fast = match &p.relax_fast {
            Some(list) => list.iter().map(|e| parse_relax(e)).collect::<Result<_>>()?,
            None => default_relaxation(&Spin::new(self.spin.s)?.basis()),
        };
        Ok(SweepProtocol {
            b_start_mt: p.b_start_mt,
            b_turn_mt: p.b_turn_mt,
            b_end_mt: p.b_end_mt,
            rate_mt_per_min: p.rate_mt_per_min,
            temperature_k: p.t_k,
            relax_fast,
        })
    }

    pub fn sweep_options(&self) -> SweepOptions {
        let p = &self.protocol;
        SweepOptions {
            grid_step_mt: p.grid_step_mt,
            alc_half_window_mt: p.alc_half_window_mt,
            slope_inner_mt: p.slope_inner_mt,
            slope_outer_mt: p.slope_outer_mt,
        }
    }

    pub fn lambda_system(&self, w_per_s: f64) -> Result<LambdaSystem> {
        LambdaSystem::new(
            w_per_s,
            self.dynamics.gamma21_per_s,
            self.dynamics.gamma23_per_s,
        )
    }

    pub fn calibration_settings(&self) -> CalibrationSettings {
        CalibrationSettings {
            regularization: self.fit.regularization,
            convention: self.fit.gap_convention,
            ..CalibrationSettings::default()
        }
    }

    pub fn map_fit_options(&self) -> MapFitOptions {
        MapFitOptions {
            prominence: self.fit.prominence,
            ..MapFitOptions::default()
        }
    }
}
