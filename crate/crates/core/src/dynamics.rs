//! Three-level (Λ) rate equations for cavity-driven depopulation of the
//! probed level, and extraction of the two decay time constants.
//!
//! Level |1⟩ is pumped to |2⟩ at rate `W`; |2⟩ decays back to |1⟩ at `Γ21` and
//! into the dark level |3⟩ at `Γ23`. The rate matrix is
//!
//! ```text
//!     | -W    Γ21        0 |
//! M = |  W   -Γ21-Γ23    0 |
//!     |  0    Γ23        0 |
//! ```
//!
//! Its nonzero eigenvalues are `(T ± sqrt(T² - 4 W Γ23)) / 2` with
//! `T = -(W + Γ21 + Γ23)`. For `W ≫ Γ` they tend to `-(W + Γ21)` and `-Γ23`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cavity::{s21_resonance, CavityMode};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSystem {
    /// Pump rate |1⟩→|2⟩, 1/s.
    pub w: f64,
    pub gamma21: f64,
    pub gamma23: f64,
}

impl LambdaSystem {
    pub fn new(w: f64, gamma21: f64, gamma23: f64) -> Result<Self> {
        for (name, v) in [
            ("W_per_s", w),
            ("gamma21_per_s", gamma21),
            ("gamma23_per_s", gamma23),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, "rate must be finite and >= 0 (1/s)"));
            }
        }
        Ok(LambdaSystem {
            w,
            gamma21,
            gamma23,
        })
    }
}

pub fn rate_matrix(sys: &LambdaSystem) -> Matrix3<f64> {
    let LambdaSystem {
        w,
        gamma21,
        gamma23,
    } = *sys;
    Matrix3::new(
        -w,
        gamma21,
        0.0, //
        w,
        -gamma21 - gamma23,
        0.0, //
        0.0,
        gamma23,
        0.0,
    )
}

/// `[0, λ_slow, λ_fast]`, ordered by magnitude; all are ≤ 0.
pub fn eigen_rates(sys: &LambdaSystem) -> [f64; 3] {
    let t = -(sys.w + sys.gamma21 + sys.gamma23);
    let det = sys.w * sys.gamma23;
    let disc = (t * t - 4.0 * det).max(0.0);
    let fast = 0.5 * (t - disc.sqrt());
    // product of the roots is det; dividing avoids cancellation in the small root
    let slow = if fast == 0.0 { 0.0 } else { det / fast };
    [0.0, slow, fast]
}

/// Saturated-drive pump rate `4 (2π g0)² N_cav / (2π γ_s)` in 1/s.
pub fn pump_rate(g0_ghz: f64, n_cav: f64, gamma_s_ghz: f64) -> Result<f64> {
    if !(g0_ghz >= 0.0) || !(n_cav >= 0.0) {
        return Err(Error::param(
            "g0_GHz",
            "coupling and photon number must be >= 0",
        ));
    }
    if !(gamma_s_ghz > 0.0) {
        return Err(Error::param(
            "gamma_s_GHz",
            "spin linewidth must be positive (GHz)",
        ));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let g = two_pi * g0_ghz * 1e9;
    Ok(4.0 * g * g * n_cav / (two_pi * gamma_s_ghz * 1e9))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationMethod {
    /// Scaling-and-squaring matrix exponential.
    #[default]
    Expm,
    /// Adaptive Dormand-Prince integration.
    Adaptive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Propagation {
    pub t: Vec<f64>,
    pub states: Vec<Vector3<f64>>,
}

impl Propagation {
    pub fn total(&self) -> f64 {
        self.states[0].sum()
    }

    pub fn decay_trace(&self) -> DecayTrace {
        let total = self.total();
        let n1 = self
            .states
            .iter()
            .map(|s| if total > 0.0 { s[0] / total } else { 0.0 })
            .collect();
        DecayTrace {
            t: self.t.clone(),
            n1,
            s21: None,
        }
    }

    pub fn max_conservation_error(&self) -> f64 {
        let total = self.total();
        self.states
            .iter()
            .map(|s| (s.sum() - total).abs() / total.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

fn check_grid(t: &[f64]) -> Result<()> {
    if t.is_empty() {
        return Err(Error::param("t_grid", "time grid is empty"));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) || t.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(
            "t_grid",
            "times must be finite and strictly ascending (s)",
        ));
    }
    Ok(())
}

/// `n(t) = exp(M t) n0` on each grid time, with `n0` taken at t = 0.
pub fn propagate(
    m: &Matrix3<f64>,
    n0: Vector3<f64>,
    t_grid: &[f64],
    method: PropagationMethod,
) -> Result<Propagation> {
    check_grid(t_grid)?;
    if t_grid[0] < 0.0 {
        return Err(Error::param("t_grid", "propagation times must be >= 0 (s)"));
    }
    let states = match method {
        PropagationMethod::Expm => t_grid.iter().map(|&t| (m * t).exp() * n0).collect(),
        PropagationMethod::Adaptive => integrate(m, n0, t_grid),
    };
    Ok(Propagation {
        t: t_grid.to_vec(),
        states,
    })
}

fn integrate(m: &Matrix3<f64>, n0: Vector3<f64>, t_grid: &[f64]) -> Vec<Vector3<f64>> {
    // Dormand-Prince 5(4)
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let rtol = 1e-12;
    let atol = 1e-14 * n0.abs().max().max(f64::MIN_POSITIVE);
    let rate = m.abs().max();
    let mut h = if rate > 0.0 {
        0.01 / rate
    } else {
        f64::INFINITY
    };

    let mut out = Vec::with_capacity(t_grid.len());
    let mut y = n0;
    let mut t = 0.0;
    for &target in t_grid {
        while t < target {
            let step = h.min(target - t);
            let mut k = [Vector3::zeros(); 7];
            k[0] = m * y;
            for s in 1..7 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    ys += kj * (A[s][j] * step);
                }
                k[s] = m * ys;
            }
            let mut y5 = y;
            let mut y4 = y;
            for s in 0..7 {
                y5 += k[s] * (B5[s] * step);
                y4 += k[s] * (B4[s] * step);
            }
            let err = (0..3)
                .map(|i| (y5[i] - y4[i]).abs() / (atol + rtol * y5[i].abs().max(y[i].abs())))
                .fold(0.0, f64::max);
            if err <= 1.0 {
                y = y5;
                t = if step == target - t { target } else { t + step };
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = step * factor;
        }
        out.push(y);
    }
    out
}

/// Occupation of |1⟩ as a fraction of the total, optionally with transmission.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayTrace {
    pub t: Vec<f64>,
    pub n1: Vec<f64>,
    pub s21: Option<Vec<f64>>,
}

impl DecayTrace {
    pub fn new(t: Vec<f64>, n1: Vec<f64>, s21: Option<Vec<f64>>) -> Result<Self> {
        check_grid(&t)?;
        if n1.len() != t.len() || s21.as_ref().is_some_and(|s| s.len() != t.len()) {
            return Err(Error::Data("trace columns have different lengths".into()));
        }
        if let Some(k) = n1.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::Data(format!(
                "n1 is negative or NaN at row {}",
                k + 1
            )));
        }
        Ok(DecayTrace { t, n1, s21 })
    }
}

/// Adds `|S21|(t)` on resonance with `n1(t) n_total` spins in the probed level.
pub fn trace_to_transmission(
    trace: &DecayTrace,
    mode: &CavityMode,
    g0_ghz: f64,
    gamma_s_ghz: f64,
    n_total: f64,
) -> DecayTrace {
    let s21 = trace
        .n1
        .iter()
        .map(|n| s21_resonance(mode, g0_ghz, gamma_s_ghz, n * n_total))
        .collect();
    DecayTrace {
        s21: Some(s21),
        ..trace.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayAnalysis {
    #[serde(rename = "tau_i_s")]
    pub tau_i: f64,
    #[serde(rename = "tau_f_s")]
    pub tau_f: f64,
    #[serde(rename = "t_star_s")]
    pub t_star: f64,
    /// RMS of the relative model mismatch.
    pub residual: f64,
}

/// Points below this fraction of the initial occupation carry no usable signal.
const SIGNAL_FLOOR: f64 = 1e-9;
/// Peeled early-time excess is fitted down to this fraction of its initial size.
const PEEL_FLOOR: f64 = 1e-3;
const MIN_SEGMENT: usize = 3;
/// Relative RMS mismatch treated as negligible when placing the changeover.
const CHANGEOVER_RTOL: f64 = 1e-3;

/// Least-squares line `y = a + b x`.
fn line_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

struct SegmentFit {
    slow: (f64, f64),
    fast: (f64, f64),
    cost: f64,
}

fn fit_split(t: &[f64], y: &[f64], s: usize) -> Option<SegmentFit> {
    let ln_late: Vec<f64> = y[s..].iter().map(|v| v.ln()).collect();
    let (ln_b, kb) = line_fit(&t[s..], &ln_late)?;
    let slow_at = |t: f64| (ln_b + kb * t).exp();

    // early excess over the extrapolated late decay
    let excess: Vec<f64> = (0..s).map(|k| y[k] - slow_at(t[k])).collect();
    let usable = excess[0] > 1e-6 * y[0]
        && excess
            .iter()
            .take_while(|e| **e > PEEL_FLOOR * excess[0])
            .count()
            >= MIN_SEGMENT;
    let (fast, peeled) = if usable {
        let m = excess
            .iter()
            .take_while(|e| **e > PEEL_FLOOR * excess[0])
            .count();
        let ln_e: Vec<f64> = excess[..m].iter().map(|v| v.ln()).collect();
        (line_fit(&t[..m], &ln_e)?, true)
    } else {
        let ln_early: Vec<f64> = y[..s].iter().map(|v| v.ln()).collect();
        (line_fit(&t[..s], &ln_early)?, false)
    };
    let model = |k: usize| -> f64 {
        let late = slow_at(t[k]);
        if k < s {
            let early = (fast.0 + fast.1 * t[k]).exp();
            if peeled {
                late + early
            } else {
                early
            }
        } else {
            late
        }
    };
    let cost = (0..y.len())
        .map(|k| ((model(k) - y[k]) / y[k]).powi(2))
        .sum();
    Some(SegmentFit {
        slow: (ln_b, kb),
        fast,
        cost,
    })
}

/// Two-segment exponential analysis with a scanned changeover time.
///
/// The late segment is a log-linear fit. The early segment is fitted to the
/// excess over the extrapolated late decay, or directly when there is no
/// measurable excess (a single exponential).
pub fn analyze_decay(trace: &DecayTrace) -> Result<DecayAnalysis> {
    let n = trace.n1.len();
    if n < 2 * MIN_SEGMENT {
        return Err(Error::InsufficientDynamicRange(format!(
            "{n} samples; need at least {}",
            2 * MIN_SEGMENT
        )));
    }
    let y0 = trace.n1[0];
    if !(y0 > 0.0) {
        return Err(Error::InsufficientDynamicRange(
            "initial occupation is zero".into(),
        ));
    }
    let y_min = trace.n1.iter().copied().fold(f64::INFINITY, f64::min);
    if y_min > 0.1 * y0 {
        return Err(Error::InsufficientDynamicRange(format!(
            "occupation only falls to {:.3} of its initial value; need below 0.1",
            y_min / y0
        )));
    }
    let keep = trace
        .n1
        .iter()
        .take_while(|v| **v > SIGNAL_FLOOR * y0)
        .count();
    if keep < 2 * MIN_SEGMENT {
        return Err(Error::InsufficientDynamicRange(
            "too few samples above the noise floor".into(),
        ));
    }
    let t = &trace.t[..keep];
    let y = &trace.n1[..keep];

    let fits: Vec<(usize, SegmentFit)> = (MIN_SEGMENT..=(keep - MIN_SEGMENT))
        .filter_map(|s| fit_split(t, y, s).map(|f| (s, f)))
        .filter(|(_, f)| f.cost.is_finite())
        .collect();
    let min_cost = fits
        .iter()
        .map(|(_, f)| f.cost)
        .fold(f64::INFINITY, f64::min);
    if !min_cost.is_finite() {
        return Err(Error::InsufficientDynamicRange(
            "no valid changeover time".into(),
        ));
    }
    // the residual is flat once the fast stage has died out; the changeover is
    // the earliest split that is as good as the best one
    let threshold = min_cost * (1.0 + 1e-2) + CHANGEOVER_RTOL * CHANGEOVER_RTOL * keep as f64;
    let (s, fit) = fits
        .into_iter()
        .find(|(_, f)| f.cost <= threshold)
        .expect("minimum is below threshold");
    let tau_f = -1.0 / fit.slow.1;
    let tau_i = -1.0 / fit.fast.1;
    if !(tau_i > 0.0 && tau_f > 0.0 && tau_i.is_finite() && tau_f.is_finite()) {
        return Err(Error::InsufficientDynamicRange(
            "trace does not decay in both segments".into(),
        ));
    }
    Ok(DecayAnalysis {
        tau_i,
        tau_f,
        t_star: t[s],
        residual: (fit.cost / keep as f64).sqrt(),
    })
}

/// Time grid resolving both decay stages of `sys`.
pub fn decay_time_grid(sys: &LambdaSystem) -> Vec<f64> {
    let [_, slow, fast] = eigen_rates(sys);
    // without a slow stage the trace is flat after the fast one
    let t_end = match (slow != 0.0, fast != 0.0) {
        (true, _) => 8.0 / slow.abs(),
        (false, true) => 8.0 / fast.abs(),
        (false, false) => 1.0,
    };
    let t_fast = if fast != 0.0 {
        (10.0 / fast.abs()).min(t_end)
    } else {
        t_end
    };
    let mut g: Vec<f64> = (0..=400).map(|k| t_fast * k as f64 / 400.0).collect();
    g.extend((1..=2000).map(|k| t_end * k as f64 / 2000.0));
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t_end);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn paper_system() -> LambdaSystem {
        LambdaSystem::new(100.0, 1.0, 2.0).unwrap()
    }

    #[test]
    fn columns_sum_to_zero() {
        let m = rate_matrix(&LambdaSystem::new(3.7, 0.2, 11.0).unwrap());
        for j in 0..3 {
            assert_eq!(m.column(j).sum(), 0.0);
        }
    }

    #[test]
    fn closed_form_eigenvalues() {
        let [z, slow, fast] = eigen_rates(&paper_system());
        assert_eq!(z, 0.0);
        let r = 9809f64.sqrt();
        assert_relative_eq!(slow, (-103.0 + r) / 2.0, max_relative = 1e-12);
        assert_relative_eq!(fast, (-103.0 - r) / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn no_decay_channels() {
        let ev = eigen_rates(&LambdaSystem::new(5.0, 0.0, 0.0).unwrap());
        assert_eq!(ev, [0.0, 0.0, -5.0]);
    }

    #[test]
    fn strong_pump_asymptote() {
        let sys = LambdaSystem::new(1e6, 1.0, 2.0).unwrap();
        let [_, slow, fast] = eigen_rates(&sys);
        assert_relative_eq!(fast, -(1e6 + 1.0), max_relative = 1e-5);
        assert_relative_eq!(slow, -2.0, max_relative = 1e-5);
    }

    #[test]
    fn pump_rate_is_linear() {
        assert_eq!(pump_rate(1e-8, 0.0, 1e-3).unwrap(), 0.0);
        let a = pump_rate(1e-8, 1e6, 1e-3).unwrap();
        assert_relative_eq!(
            pump_rate(1e-8, 2e6, 1e-3).unwrap(),
            2.0 * a,
            max_relative = 1e-15
        );
        assert!(pump_rate(1e-8, 1.0, 0.0).is_err());
    }

    #[test]
    fn both_propagators_agree() {
        let m = rate_matrix(&paper_system());
        let n0 = Vector3::new(1.0, 0.0, 0.0);
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.05).collect();
        let a = propagate(&m, n0, &t, PropagationMethod::Expm).unwrap();
        let b = propagate(&m, n0, &t, PropagationMethod::Adaptive).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            for i in 0..3 {
                assert!(
                    (x[i] - y[i]).abs() <= 1e-8 * x[i].abs().max(1e-6),
                    "{x} vs {y}"
                );
            }
        }
        assert!(a.max_conservation_error() < 1e-12);
    }

    #[test]
    fn zero_pump_is_flat() {
        let m = rate_matrix(&LambdaSystem::new(0.0, 1.0, 2.0).unwrap());
        let p = propagate(
            &m,
            Vector3::new(1.0, 0.0, 0.0),
            &[0.0, 1.0, 10.0],
            PropagationMethod::Expm,
        )
        .unwrap();
        assert!(p.states.iter().all(|s| s[0] == 1.0));
    }

    #[test]
    fn recovers_both_rates() {
        let sys = paper_system();
        let m = rate_matrix(&sys);
        let t = decay_time_grid(&sys);
        let trace = propagate(&m, Vector3::new(1.0, 0.0, 0.0), &t, PropagationMethod::Expm)
            .unwrap()
            .decay_trace();
        let a = analyze_decay(&trace).unwrap();
        let [_, slow, fast] = eigen_rates(&sys);
        assert_relative_eq!(1.0 / a.tau_i, fast.abs(), max_relative = 0.1);
        assert_relative_eq!(1.0 / a.tau_f, slow.abs(), max_relative = 0.1);
    }

    #[test]
    fn single_exponential_gives_equal_constants() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let n1 = t.iter().map(|t| (-t / 1.5).exp()).collect();
        let a = analyze_decay(&DecayTrace::new(t, n1, None).unwrap()).unwrap();
        assert_relative_eq!(a.tau_i, 1.5, max_relative = 1e-6);
        assert_relative_eq!(a.tau_f, 1.5, max_relative = 1e-6);
    }

    #[test]
    fn flat_trace_is_rejected() {
        let t: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let err = analyze_decay(&DecayTrace::new(t, vec![0.7; 20], None).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InsufficientDynamicRange(_)));
    }

    #[test]
    fn rejects_unsorted_grid() {
        assert!(DecayTrace::new(vec![0.0, 2.0, 1.0], vec![1.0; 3], None).is_err());
    }
}
