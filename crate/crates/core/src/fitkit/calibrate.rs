//! Crystal-field calibration against observed transition frequencies,
//! avoided-crossing positions and level couplings.

use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::{FitParam, FitResult};
use crate::error::{Error, Result};
use crate::spectra::{find_alc, transition_between};
use crate::spinham::{stevens_operators, Mj, SpinSystem, StevensCoefficients};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Anchor {
    /// Transition frequency between two labelled branches at a field.
    Transition {
        from: Mj,
        to: Mj,
        #[serde(rename = "field_mT")]
        field_mt: f64,
        #[serde(rename = "f_GHz")]
        f_ghz: f64,
    },
    /// Field of minimum splitting between two branches.
    AlcCenter {
        a: Mj,
        b: Mj,
        #[serde(rename = "b_c_mT")]
        b_c_mt: f64,
        #[serde(rename = "lo_mT")]
        lo_mt: f64,
        #[serde(rename = "hi_mT")]
        hi_mt: f64,
    },
    /// Coupling between two branches (see [`GapConvention`]).
    Coupling {
        a: Mj,
        b: Mj,
        #[serde(rename = "value_GHz")]
        value_ghz: f64,
        #[serde(rename = "lo_mT")]
        lo_mt: f64,
        #[serde(rename = "hi_mT")]
        hi_mt: f64,
    },
}

/// Whether a coupling anchor is half the minimum splitting or the full splitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapConvention {
    #[default]
    HalfGap,
    FullGap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Weight of the pull towards the prior, applied to each term's GHz-scale size.
    pub regularization: f64,
    pub convention: GapConvention,
    /// Residual scale for transition anchors, GHz.
    #[serde(rename = "sigma_f_GHz")]
    pub sigma_f_ghz: f64,
    /// Residual scale for crossing-centre anchors, mT.
    #[serde(rename = "sigma_B_mT")]
    pub sigma_b_mt: f64,
    /// Residual scale for coupling anchors, GHz.
    #[serde(rename = "sigma_coupling_GHz")]
    pub sigma_coupling_ghz: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            regularization: 100.0,
            convention: GapConvention::HalfGap,
            sigma_f_ghz: 0.01,
            sigma_b_mt: 0.1,
            sigma_coupling_ghz: 0.001,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub coefficients: StevensCoefficients,
    pub fit: FitResult,
    /// Model value of every anchor at the calibrated coefficients.
    pub predictions: Vec<f64>,
}

const ALC_GRID_POINTS: usize = 61;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

impl Anchor {
    pub fn target(&self) -> f64 {
        match *self {
            Anchor::Transition { f_ghz, .. } => f_ghz,
            Anchor::AlcCenter { b_c_mt, .. } => b_c_mt,
            Anchor::Coupling { value_ghz, .. } => value_ghz,
        }
    }

    /// Model prediction of this anchor's observable.
    pub fn predict(&self, sys: &SpinSystem, convention: GapConvention) -> Result<f64> {
        match *self {
            Anchor::Transition {
                from, to, field_mt, ..
            } => {
                let d = sys.sweep(&[field_mt - 0.5, field_mt, field_mt + 0.5])?;
                Ok(transition_between(&d, from, to, field_mt)?.f_ghz)
            }
            Anchor::AlcCenter {
                a, b, lo_mt, hi_mt, ..
            } => {
                let d = sys.sweep(&linspace(lo_mt, hi_mt, ALC_GRID_POINTS))?;
                Ok(find_alc(&d, (a, b), (lo_mt, hi_mt))?.b_c_mt)
            }
            Anchor::Coupling {
                a, b, lo_mt, hi_mt, ..
            } => {
                let d = sys.sweep(&linspace(lo_mt, hi_mt, ALC_GRID_POINTS))?;
                let alc = find_alc(&d, (a, b), (lo_mt, hi_mt))?;
                Ok(match convention {
                    GapConvention::HalfGap => alc.g_lz_ghz,
                    GapConvention::FullGap => alc.gap_ghz,
                })
            }
        }
    }

    fn sigma(&self, s: &CalibrationSettings) -> f64 {
        match self {
            Anchor::Transition { .. } => s.sigma_f_ghz,
            Anchor::AlcCenter { .. } => s.sigma_b_mt,
            Anchor::Coupling { .. } => s.sigma_coupling_ghz,
        }
    }
}

/// Fits the five Stevens coefficients of `base` to the anchors.
///
/// With zero regularization the problem must be fully determined by the
/// anchors; fewer than five anchors is rejected rather than guessed.
pub fn calibrate_crystal_field(
    base: &SpinSystem,
    anchors: &[Anchor],
    prior: StevensCoefficients,
    settings: &CalibrationSettings,
) -> Result<Calibration> {
    if anchors.is_empty() {
        return Err(Error::param("anchors", "at least one anchor is required"));
    }
    if settings.regularization < 0.0 {
        return Err(Error::param("regularization", "must be >= 0"));
    }
    if settings.regularization == 0.0 && anchors.len() < 5 {
        return Err(Error::param(
            "anchors",
            format!(
                "{} anchors cannot fix 5 coefficients without a prior (regularization = 0)",
                anchors.len()
            ),
        ));
    }
    let ops = stevens_operators(base.spin);
    let op_norms: Vec<f64> = [&ops.o20, &ops.o40, &ops.o60, &ops.o44, &ops.o64]
        .iter()
        .map(|o| o.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max))
        .collect();
    let reg = settings.regularization.sqrt();
    let prior_arr = prior.to_array();

    let system_for = |p: &[f64]| SpinSystem {
        cf: StevensCoefficients::from_array([p[0], p[1], p[2], p[3], p[4]]),
        ..base.clone()
    };
    let residuals = |p: &[f64]| -> Vec<f64> {
        let sys = system_for(p);
        let mut r: Vec<f64> = anchors
            .iter()
            .map(|a| match a.predict(&sys, settings.convention) {
                Ok(v) => (v - a.target()) / a.sigma(settings),
                Err(_) => f64::NAN,
            })
            .collect();
        if reg > 0.0 {
            r.extend((0..5).map(|i| reg * (p[i] - prior_arr[i]) * op_norms[i]));
        }
        r
    };

    // one GHz-scale unit of each operator sets the finite-difference floor
    let scales: Vec<f64> = op_norms.iter().map(|n| 1e-3 / n).collect();
    let start = base.cf.to_array();
    let start = if start.iter().all(|c| *c == 0.0) {
        prior_arr
    } else {
        start
    };
    let out = levenberg_marquardt(
        residuals,
        &start,
        &scales,
        &StevensCoefficients::NAMES,
        &LmOptions::default(),
    )?;
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: out.iterations,
            residual: out.rms(),
        });
    }
    let coefficients = StevensCoefficients::from_array([
        out.params[0],
        out.params[1],
        out.params[2],
        out.params[3],
        out.params[4],
    ]);
    let sys = system_for(&out.params);
    let predictions = anchors
        .iter()
        .map(|a| a.predict(&sys, settings.convention))
        .collect::<Result<Vec<_>>>()?;
    let params = StevensCoefficients::NAMES
        .iter()
        .zip(&out.params)
        .map(|(n, v)| FitParam {
            name: (*n).to_string(),
            value: *v,
            unit: "GHz".into(),
        })
        .collect();
    Ok(Calibration {
        coefficients,
        fit: FitResult::from_outcome(&out, params),
        predictions,
    })
}

/// The four level-structure anchors for Gd3+ in YVO4.
pub fn gd_yvo4_anchors() -> Vec<Anchor> {
    let m = Mj::from_twice;
    vec![
        Anchor::Transition {
            from: m(-7),
            to: m(-5),
            field_mt: 26.0,
            f_ghz: 9.45,
        },
        Anchor::Transition {
            from: m(7),
            to: m(5),
            field_mt: 43.0,
            f_ghz: 7.46,
        },
        Anchor::AlcCenter {
            a: m(7),
            b: m(-5),
            b_c_mt: 52.0,
            lo_mt: 40.0,
            hi_mt: 65.0,
        },
        Anchor::Coupling {
            a: m(5),
            b: m(-3),
            value_ghz: 0.22,
            lo_mt: 30.0,
            hi_mt: 75.0,
        },
    ]
}
