//! Parameter recovery: transmission spectra and maps, decay traces, and
//! crystal-field calibration.

pub mod calibrate;
pub mod lm;
pub mod map;
pub mod spectrum;

use serde::{Deserialize, Serialize};

pub use calibrate::{
    calibrate_crystal_field, Anchor, Calibration, CalibrationSettings, GapConvention,
};
pub use lm::{levenberg_marquardt, LmOptions, LmOutcome};
pub use map::{
    extract_peaks, fit_alc_map, AlcMapGuess, ColumnPeaks, MapFitOptions, TransmissionMap,
};
pub use spectrum::{fit_spectrum, SpectrumParam};

use crate::dynamics::{analyze_decay, DecayAnalysis, DecayTrace};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<FitParam>,
    /// Root-mean-square residual.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub(crate) fn from_outcome(out: &LmOutcome, params: Vec<FitParam>) -> Self {
        FitResult {
            params,
            residual: out.rms(),
            iterations: out.iterations,
            converged: out.converged,
            grad_norm: out.grad_norm,
        }
    }
}

/// Two-segment exponential analysis of an ingested or simulated trace.
pub fn fit_double_exponential(trace: &DecayTrace) -> Result<DecayAnalysis> {
    analyze_decay(trace)
}
