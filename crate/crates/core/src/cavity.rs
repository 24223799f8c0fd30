//! Input-output model of a cavity mode coupled to a spin transition.
//!
//! Rates in the line shape are ordinary frequencies in GHz; no factors of
//! 2π enter the transmission formula.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinham::C64;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const MU_0: f64 = 1.256_637_062_12e-6;
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityMode {
    pub label: String,
    pub f0_ghz: f64,
    pub kappa_c_ghz: f64,
    pub gamma_d_ghz: f64,
    /// Magnetic filling factor.
    pub beta: f64,
}

impl CavityMode {
    pub fn new(
        label: impl Into<String>,
        f0_ghz: f64,
        kappa_c_ghz: f64,
        gamma_d_ghz: f64,
        beta: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("f0_GHz", f0_ghz),
            ("kappa_c_GHz", kappa_c_ghz),
            ("gamma_d_GHz", gamma_d_ghz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive (GHz)"));
            }
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::param("beta", "must lie in (0, 1] (dimensionless)"));
        }
        Ok(CavityMode {
            label: label.into(),
            f0_ghz,
            kappa_c_ghz,
            gamma_d_ghz,
            beta,
        })
    }

    /// Half width of the bare resonance, GHz.
    pub fn half_width(&self) -> f64 {
        self.kappa_c_ghz + self.gamma_d_ghz / 2.0
    }

    /// On-resonance transmission without spins.
    pub fn bare_transmission(&self) -> f64 {
        self.kappa_c_ghz / self.half_width()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrystalSpec {
    pub diameter_mm: f64,
    pub height_mm: f64,
    pub mu_r: f64,
    pub volume_cm3: f64,
}

impl CrystalSpec {
    pub fn new(diameter_mm: f64, height_mm: f64, mu_r: f64) -> Result<Self> {
        for (name, v) in [
            ("diameter_mm", diameter_mm),
            ("height_mm", height_mm),
            ("mu_r", mu_r),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        let r = diameter_mm / 2.0;
        let volume_cm3 = std::f64::consts::PI * r * r * height_mm * 1e-3;
        Ok(CrystalSpec {
            diameter_mm,
            height_mm,
            mu_r,
            volume_cm3,
        })
    }

    pub fn volume_m3(&self) -> f64 {
        self.volume_cm3 * 1e-6
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinBath {
    pub f_s_ghz: f64,
    pub gamma_s_ghz: f64,
    pub g_eff_ghz: f64,
}

impl SpinBath {
    pub fn new(f_s_ghz: f64, gamma_s_ghz: f64, g_eff_ghz: f64) -> Result<Self> {
        if !(gamma_s_ghz > 0.0) {
            return Err(Error::param("gamma_s_GHz", "must be positive (GHz)"));
        }
        if !(g_eff_ghz >= 0.0) {
            return Err(Error::param("g_eff_GHz", "must be non-negative (GHz)"));
        }
        Ok(SpinBath {
            f_s_ghz,
            gamma_s_ghz,
            g_eff_ghz,
        })
    }
}

/// Coupling of one spin to the mode, GHz:
/// `g0 = (g mu_B / 2h) sqrt(h f0 mu beta / 2V)` with mu = mu_0 mu_r.
pub fn single_spin_coupling(g_factor: f64, mode: &CavityMode, crystal: &CrystalSpec) -> f64 {
    let f0 = mode.f0_ghz * 1e9;
    let mu = MU_0 * crystal.mu_r;
    let b_vac = (PLANCK * f0 * mu * mode.beta / (2.0 * crystal.volume_m3())).sqrt();
    g_factor * BOHR_MAGNETON / (2.0 * PLANCK) * b_vac * 1e-9
}

pub fn effective_coupling(g0_ghz: f64, n_spins: f64) -> f64 {
    g0_ghz * n_spins.max(0.0).sqrt()
}

/// Complex transmission at probe frequency `f_ghz`.
pub fn s21(f_ghz: f64, mode: &CavityMode, bath: &SpinBath) -> C64 {
    let i = C64::new(0.0, 1.0);
    let spin = C64::new(bath.gamma_s_ghz / 2.0, 0.0) - i * (f_ghz - bath.f_s_ghz);
    let denom = C64::new(mode.half_width(), 0.0) - i * (f_ghz - mode.f0_ghz)
        + C64::new(bath.g_eff_ghz * bath.g_eff_ghz, 0.0) / spin;
    C64::new(mode.kappa_c_ghz, 0.0) / denom
}

/// Transmission with cavity, spins and probe all on resonance.
pub fn s21_resonance(mode: &CavityMode, g0_ghz: f64, gamma_s_ghz: f64, n_upper: f64) -> f64 {
    mode.kappa_c_ghz / (mode.half_width() + 2.0 * g0_ghz * g0_ghz * n_upper / gamma_s_ghz)
}

/// Inverts [`s21_resonance`] for the spin number.
pub fn spins_from_resonance(mode: &CavityMode, g0_ghz: f64, gamma_s_ghz: f64, s21: f64) -> f64 {
    (mode.kappa_c_ghz / s21 - mode.half_width()) * gamma_s_ghz / (2.0 * g0_ghz * g0_ghz)
}

/// Mean intracavity photon number for a resonant drive of `p_inc_w` watts.
///
/// Uses `n = 4 k_in P / (h f0 k_tot^2)` with angular rates
/// `k_in = 2π·2κ_c` and `k_tot = 2π(2κ_c + γ_d)`, so
/// `n = 4 κ_c P / (π h f0 (2κ_c + γ_d)^2)` in ordinary-frequency rates.
pub fn photon_number(p_inc_w: f64, mode: &CavityMode) -> f64 {
    let kc = mode.kappa_c_ghz * 1e9;
    let gd = mode.gamma_d_ghz * 1e9;
    let f0 = mode.f0_ghz * 1e9;
    4.0 * kc * p_inc_w.max(0.0) / (std::f64::consts::PI * PLANCK * f0 * (2.0 * kc + gd).powi(2))
}

/// Spin density in cm^-3 from a measured ensemble coupling.
pub fn concentration(g_meas_ghz: f64, g0_ghz: f64, crystal: &CrystalSpec) -> f64 {
    g_meas_ghz * g_meas_ghz / (g0_ghz * g0_ghz * crystal.volume_cm3)
}

pub fn to_db(s21_abs: f64) -> f64 {
    20.0 * s21_abs.log10()
}

pub fn from_db(s21_db: f64) -> f64 {
    10f64.powf(s21_db / 20.0)
}
