//! Least-squares fit of the coupled cavity-spin lineshape to one |S21| slice.

use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::{FitParam, FitResult};
use crate::cavity::{s21, CavityMode, SpinBath};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumParam {
    KappaC,
    GammaD,
    F0,
    GammaS,
    GEff,
    FS,
}

impl SpectrumParam {
    pub const ALL: [SpectrumParam; 6] = [
        SpectrumParam::KappaC,
        SpectrumParam::GammaD,
        SpectrumParam::F0,
        SpectrumParam::GammaS,
        SpectrumParam::GEff,
        SpectrumParam::FS,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpectrumParam::KappaC => "kappa_c_GHz",
            SpectrumParam::GammaD => "gamma_d_GHz",
            SpectrumParam::F0 => "f0_GHz",
            SpectrumParam::GammaS => "gamma_s_GHz",
            SpectrumParam::GEff => "g_eff_GHz",
            SpectrumParam::FS => "f_s_GHz",
        }
    }

    fn get(self, m: &CavityMode, b: &SpinBath) -> f64 {
        match self {
            SpectrumParam::KappaC => m.kappa_c_ghz,
            SpectrumParam::GammaD => m.gamma_d_ghz,
            SpectrumParam::F0 => m.f0_ghz,
            SpectrumParam::GammaS => b.gamma_s_ghz,
            SpectrumParam::GEff => b.g_eff_ghz,
            SpectrumParam::FS => b.f_s_ghz,
        }
    }

    fn set(self, m: &mut CavityMode, b: &mut SpinBath, v: f64) {
        match self {
            SpectrumParam::KappaC => m.kappa_c_ghz = v,
            SpectrumParam::GammaD => m.gamma_d_ghz = v,
            SpectrumParam::F0 => m.f0_ghz = v,
            SpectrumParam::GammaS => b.gamma_s_ghz = v,
            SpectrumParam::GEff => b.g_eff_ghz = v,
            SpectrumParam::FS => b.f_s_ghz = v,
        }
    }

    /// Only the magnitude of these enters |S21|.
    fn sign_free(self) -> bool {
        matches!(self, SpectrumParam::GEff)
    }
}

impl std::str::FromStr for SpectrumParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SpectrumParam::ALL
            .into_iter()
            .find(|p| p.name() == s || p.name().trim_end_matches("_GHz") == s)
            .ok_or_else(|| Error::param("free", format!("unknown spectrum parameter `{s}`")))
    }
}

/// Fits the `free` parameters of (`mode`, `bath`) to `|S21|` samples on `f_grid`.
///
/// Internally each parameter is an offset from its guess in units of the
/// guessed cavity half width, which keeps GHz-scale frequencies and
/// kHz-scale widths equally resolved.
pub fn fit_spectrum(
    f_grid: &[f64],
    data: &[f64],
    mode: &CavityMode,
    bath: &SpinBath,
    free: &[SpectrumParam],
) -> Result<FitResult> {
    if f_grid.len() != data.len() {
        return Err(Error::Data(format!(
            "{} frequencies but {} |S21| values",
            f_grid.len(),
            data.len()
        )));
    }
    if free.is_empty() {
        return Err(Error::param("free", "no free parameters"));
    }
    if f_grid.len() < 5 * free.len() {
        return Err(Error::TooFewPoints {
            points: f_grid.len(),
            params: free.len(),
        });
    }
    if data.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Data("|S21| values must be finite and >= 0".into()));
    }
    let unit = mode.half_width();
    let x0: Vec<f64> = free.iter().map(|p| p.get(mode, bath)).collect();
    let build = |x: &[f64]| {
        let (mut m, mut b) = (mode.clone(), *bath);
        for ((p, dx), v0) in free.iter().zip(x).zip(&x0) {
            p.set(&mut m, &mut b, v0 + dx * unit);
        }
        (m, b)
    };
    let residuals = |x: &[f64]| -> Vec<f64> {
        let (m, b) = build(x);
        f_grid
            .iter()
            .zip(data)
            .map(|(f, d)| s21(*f, &m, &b).norm() - d)
            .collect()
    };
    let names: Vec<&str> = free.iter().map(|p| p.name()).collect();
    let start = vec![0.0; free.len()];
    let scales = vec![1.0; free.len()];
    let out = levenberg_marquardt(residuals, &start, &scales, &names, &LmOptions::default())?;
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: out.iterations,
            residual: out.rms(),
        });
    }
    let (m, b) = build(&out.params);
    let params = free
        .iter()
        .map(|p| {
            let v = p.get(&m, &b);
            FitParam {
                name: p.name().into(),
                value: if p.sign_free() { v.abs() } else { v },
                unit: "GHz".into(),
            }
        })
        .collect();
    Ok(FitResult::from_outcome(&out, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn truth() -> (CavityMode, SpinBath) {
        (
            CavityMode::new("m", 7.46, 5e-5, 1e-4, 0.5).unwrap(),
            SpinBath::new(7.4605, 1e-3, 2.6e-3).unwrap(),
        )
    }

    fn grid() -> Vec<f64> {
        (0..400).map(|k| 7.45 + 0.02 * k as f64 / 399.0).collect()
    }

    #[test]
    fn recovers_all_parameters() {
        let (m, b) = truth();
        let f = grid();
        let y: Vec<f64> = f.iter().map(|f| s21(*f, &m, &b).norm()).collect();
        let mut mg = m.clone();
        mg.kappa_c_ghz *= 1.1;
        mg.gamma_d_ghz *= 0.9;
        mg.f0_ghz += 2e-5;
        let bg = SpinBath::new(b.f_s_ghz - 1e-4, 1.2e-3, 2.4e-3).unwrap();
        let fit = fit_spectrum(&f, &y, &mg, &bg, &SpectrumParam::ALL).unwrap();
        assert!(fit.converged);
        for p in SpectrumParam::ALL {
            assert_relative_eq!(
                fit.get(p.name()).unwrap(),
                p.get(&m, &b),
                max_relative = 1e-3
            );
        }
    }

    #[test]
    fn bare_lorentzian() {
        let (m, _) = truth();
        let bath = SpinBath::new(7.0, 1e-3, 0.0).unwrap();
        let f: Vec<f64> = (0..200).map(|k| 7.459 + 0.002 * k as f64 / 199.0).collect();
        let y: Vec<f64> = f.iter().map(|f| s21(*f, &m, &bath).norm()).collect();
        let mut mg = m.clone();
        mg.kappa_c_ghz = 4e-5;
        mg.gamma_d_ghz = 1.3e-4;
        mg.f0_ghz += 1e-5;
        let free = [
            SpectrumParam::KappaC,
            SpectrumParam::GammaD,
            SpectrumParam::F0,
        ];
        let fit = fit_spectrum(&f, &y, &mg, &bath, &free).unwrap();
        assert_relative_eq!(fit.get("kappa_c_GHz").unwrap(), 5e-5, max_relative = 1e-3);
        assert_relative_eq!(fit.get("gamma_d_GHz").unwrap(), 1e-4, max_relative = 1e-3);
        assert_relative_eq!(fit.get("f0_GHz").unwrap(), 7.46, max_relative = 1e-9);
    }

    #[test]
    fn too_few_points() {
        let (m, b) = truth();
        let f = vec![7.46; 20];
        let err = fit_spectrum(&f, &[0.5; 20], &m, &b, &SpectrumParam::ALL).unwrap_err();
        assert!(matches!(err, Error::TooFewPoints { .. }));
    }

    #[test]
    fn parses_names() {
        assert_eq!(
            "g_eff_GHz".parse::<SpectrumParam>().unwrap(),
            SpectrumParam::GEff
        );
        assert_eq!("f0".parse::<SpectrumParam>().unwrap(), SpectrumParam::F0);
        assert!("q".parse::<SpectrumParam>().is_err());
    }
}
