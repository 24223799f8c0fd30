//! Ensemble coupling from a field-frequency transmission map.
//!
//! The spin transition is taken as linear in field across the map,
//! `f_s(B) = f0 + s (B - B_res)`. The coupled modes are the roots of
//! `(f - f0 + i hw)(f - f_s + i γ_s/2) = g²`, whose real parts trace the two
//! branches of the avoided crossing.

use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::{FitParam, FitResult};
use crate::cavity::{s21, CavityMode, SpinBath};
use crate::error::{Error, Result};
use crate::spinham::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionMap {
    pub b_grid: Vec<f64>,
    pub f_grid: Vec<f64>,
    /// `values[i][j]` is |S21| at `b_grid[i]`, `f_grid[j]`.
    pub values: Vec<Vec<f64>>,
}

impl TransmissionMap {
    pub fn new(b_grid: Vec<f64>, f_grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != b_grid.len() || values.iter().any(|c| c.len() != f_grid.len()) {
            return Err(Error::Data(format!(
                "map values must be {} columns of {} frequencies",
                b_grid.len(),
                f_grid.len()
            )));
        }
        if values
            .iter()
            .flatten()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::Data("|S21| values must be finite and >= 0".into()));
        }
        for (name, g) in [("B_mT", &b_grid), ("f_GHz", &f_grid)] {
            if g.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Data(format!(
                    "{name} values must be strictly ascending"
                )));
            }
        }
        Ok(TransmissionMap {
            b_grid,
            f_grid,
            values,
        })
    }

    /// Assembles a map from `(B, f, |S21|)` samples covering a full grid.
    pub fn from_samples(samples: &[(f64, f64, f64)]) -> Result<Self> {
        let mut bs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let mut fs: Vec<f64> = samples.iter().map(|s| s.1).collect();
        for g in [&mut bs, &mut fs] {
            g.sort_by(f64::total_cmp);
            g.dedup();
        }
        if bs.len() * fs.len() != samples.len() {
            return Err(Error::Data(format!(
                "{} samples do not fill a {}x{} field-frequency grid",
                samples.len(),
                bs.len(),
                fs.len()
            )));
        }
        let mut values = vec![vec![f64::NAN; fs.len()]; bs.len()];
        for &(b, f, v) in samples {
            let i = bs
                .binary_search_by(|x| x.total_cmp(&b))
                .expect("grid built from samples");
            let j = fs
                .binary_search_by(|x| x.total_cmp(&f))
                .expect("grid built from samples");
            if !values[i][j].is_nan() {
                return Err(Error::Data(format!(
                    "duplicate sample at B = {b} mT, f = {f} GHz"
                )));
            }
            values[i][j] = v;
        }
        TransmissionMap::new(bs, fs, values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnPeaks {
    pub b_mt: f64,
    /// Refined peak frequencies, ascending.
    pub f_ghz: Vec<f64>,
    pub height: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapFitOptions {
    /// Minimum peak prominence as a fraction of the map maximum.
    pub prominence: f64,
    /// Refine the branch fit against every map sample.
    pub full_map: bool,
}

impl Default for MapFitOptions {
    fn default() -> Self {
        MapFitOptions {
            prominence: 0.1,
            full_map: true,
        }
    }
}

/// Starting point for [`fit_alc_map`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlcMapGuess {
    pub mode: CavityMode,
    pub gamma_s_ghz: f64,
    /// Magnitude of the spin-transition slope; both signs are tried.
    pub slope_ghz_per_mt: f64,
}

fn prominences(col: &[f64]) -> Vec<(usize, f64)> {
    let n = col.len();
    let mut out = Vec::new();
    for k in 1..n.saturating_sub(1) {
        if !(col[k] > col[k - 1] && col[k] >= col[k + 1]) {
            continue;
        }
        let mut left = col[k];
        let mut i = k;
        while i > 0 && col[i - 1] <= col[k] {
            i -= 1;
            left = left.min(col[i]);
        }
        let mut right = col[k];
        let mut j = k;
        while j + 1 < n && col[j + 1] <= col[k] {
            j += 1;
            right = right.min(col[j]);
        }
        out.push((k, col[k] - left.max(right)));
    }
    out
}

/// Local maxima of every field column with parabolic sub-bin refinement.
pub fn extract_peaks(map: &TransmissionMap, prominence: f64) -> Vec<ColumnPeaks> {
    let threshold = prominence * map.max();
    let f = &map.f_grid;
    map.b_grid
        .iter()
        .zip(&map.values)
        .map(|(&b_mt, col)| {
            let mut peaks: Vec<(f64, f64)> = prominences(col)
                .into_iter()
                .filter(|(_, p)| *p >= threshold)
                .map(|(k, _)| {
                    let (y0, y1, y2) = (col[k - 1], col[k], col[k + 1]);
                    let denom = y0 - 2.0 * y1 + y2;
                    let shift = if denom < 0.0 {
                        (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5)
                    } else {
                        0.0
                    };
                    let step = if shift >= 0.0 {
                        f[k + 1] - f[k]
                    } else {
                        f[k] - f[k - 1]
                    };
                    (f[k] + shift * step, y1 - 0.25 * (y0 - y2) * shift)
                })
                .collect();
            peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
            ColumnPeaks {
                b_mt,
                f_ghz: peaks.iter().map(|p| p.0).collect(),
                height: peaks.iter().map(|p| p.1).collect(),
            }
        })
        .collect()
}

/// Complex normal-mode frequencies (lower, upper real part).
pub fn normal_modes(f0: f64, hw: f64, f_s: f64, gamma_s: f64, g: f64) -> (C64, C64) {
    let a = C64::new(f0, -hw);
    let b = C64::new(f_s, -gamma_s / 2.0);
    let mid = (a + b) / 2.0;
    let root = (((a - b) / 2.0).powi(2) + g * g).sqrt();
    let (p, q) = (mid - root, mid + root);
    if p.re <= q.re {
        (p, q)
    } else {
        (q, p)
    }
}

/// |S21| map for a spin line linear in field.
#[allow(clippy::too_many_arguments)]
pub fn linear_alc_map(
    mode: &CavityMode,
    gamma_s_ghz: f64,
    g_eff_ghz: f64,
    b_res_mt: f64,
    slope_ghz_per_mt: f64,
    b_grid: &[f64],
    f_grid: &[f64],
) -> Result<TransmissionMap> {
    let values = b_grid
        .iter()
        .map(|b| {
            let bath = SpinBath {
                f_s_ghz: mode.f0_ghz + slope_ghz_per_mt * (b - b_res_mt),
                gamma_s_ghz,
                g_eff_ghz,
            };
            f_grid.iter().map(|f| s21(*f, mode, &bath).norm()).collect()
        })
        .collect();
    TransmissionMap::new(b_grid.to_vec(), f_grid.to_vec(), values)
}

/// One observed peak attached to a branch (0 lower, 1 upper).
struct BranchPoint {
    b: f64,
    f: f64,
    branch: usize,
}

/// Internal parameter vector: g, slope and offsets in MHz, field in mT.
#[derive(Clone, Copy)]
struct Branch {
    g_mhz: f64,
    b_res: f64,
    slope_mhz: f64,
    df0_mhz: f64,
}

fn branch_freqs(p: Branch, f0: f64, hw: f64, gamma_s: f64, b: f64) -> (f64, f64) {
    let f0 = f0 + p.df0_mhz * 1e-3;
    let fs = f0 + p.slope_mhz * 1e-3 * (b - p.b_res);
    let (lo, hi) = normal_modes(f0, hw, fs, gamma_s, p.g_mhz * 1e-3);
    (lo.re, hi.re)
}

fn assign(peaks: &[ColumnPeaks], p: Branch, f0: f64, hw: f64, gamma_s: f64) -> Vec<BranchPoint> {
    let mut pts = Vec::new();
    for col in peaks {
        let (lo, hi) = branch_freqs(p, f0, hw, gamma_s, col.b_mt);
        match col.f_ghz.len() {
            0 => {}
            1 => {
                let f = col.f_ghz[0];
                let branch = if (f - lo).abs() <= (f - hi).abs() {
                    0
                } else {
                    1
                };
                pts.push(BranchPoint {
                    b: col.b_mt,
                    f,
                    branch,
                });
            }
            _ => {
                // the two tallest peaks, in frequency order
                let mut idx: Vec<usize> = (0..col.f_ghz.len()).collect();
                idx.sort_by(|&a, &b| col.height[b].total_cmp(&col.height[a]));
                let (mut a, mut b) = (idx[0], idx[1]);
                if col.f_ghz[a] > col.f_ghz[b] {
                    std::mem::swap(&mut a, &mut b);
                }
                pts.push(BranchPoint {
                    b: col.b_mt,
                    f: col.f_ghz[a],
                    branch: 0,
                });
                pts.push(BranchPoint {
                    b: col.b_mt,
                    f: col.f_ghz[b],
                    branch: 1,
                });
            }
        }
    }
    pts
}

fn fit_branches(
    peaks: &[ColumnPeaks],
    start: Branch,
    f0: f64,
    hw: f64,
    gamma_s: f64,
) -> Result<(Branch, f64)> {
    let pts = assign(peaks, start, f0, hw, gamma_s);
    let unpack = |x: &[f64]| Branch {
        g_mhz: x[0],
        b_res: x[1],
        slope_mhz: x[2],
        df0_mhz: x[3],
    };
    let residuals = |x: &[f64]| -> Vec<f64> {
        let p = unpack(x);
        pts.iter()
            .map(|pt| {
                let (lo, hi) = branch_freqs(p, f0, hw, gamma_s, pt.b);
                (pt.f - if pt.branch == 0 { lo } else { hi }) * 1e3
            })
            .collect()
    };
    let x0 = [start.g_mhz, start.b_res, start.slope_mhz, start.df0_mhz];
    let scales = [
        start.g_mhz.abs().max(0.1),
        1.0,
        start.slope_mhz.abs().max(1.0),
        1.0,
    ];
    let out = levenberg_marquardt(
        residuals,
        &x0,
        &scales,
        &["g_eff", "b_res", "slope", "f0"],
        &LmOptions::default(),
    )?;
    Ok((unpack(&out.params), out.cost))
}

/// Recovers the ensemble coupling from a transmission map.
pub fn fit_alc_map(
    map: &TransmissionMap,
    guess: &AlcMapGuess,
    opts: &MapFitOptions,
) -> Result<FitResult> {
    let peaks = extract_peaks(map, opts.prominence);
    let split: Vec<(f64, f64)> = peaks
        .iter()
        .filter(|c| c.f_ghz.len() >= 2)
        .map(|c| (c.b_mt, (c.f_ghz[c.f_ghz.len() - 1] - c.f_ghz[0]) / 2.0))
        .collect();
    if split.is_empty() {
        return Err(Error::NoCrossing {
            a: "spins".into(),
            b: guess.mode.label.clone(),
            lo_mt: map.b_grid[0],
            hi_mt: *map.b_grid.last().unwrap_or(&map.b_grid[0]),
        });
    }
    let &(b_res, half) = split
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    let (f0, hw, gamma_s) = (
        guess.mode.f0_ghz,
        guess.mode.half_width(),
        guess.gamma_s_ghz,
    );

    let mut best: Option<(Branch, f64)> = None;
    for sign in [1.0, -1.0] {
        let start = Branch {
            g_mhz: half * 1e3,
            b_res,
            slope_mhz: sign * guess.slope_ghz_per_mt * 1e3,
            df0_mhz: 0.0,
        };
        let Ok((p, _)) = fit_branches(&peaks, start, f0, hw, gamma_s) else {
            continue;
        };
        // second pass with branch assignment from the first solution
        let Ok(fit) = fit_branches(&peaks, p, f0, hw, gamma_s) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| fit.1 < b.1) {
            best = Some(fit);
        }
    }
    let (branch, _) = best.ok_or(Error::NonConvergence {
        iterations: 0,
        residual: f64::NAN,
    })?;

    let mut values = vec![
        branch.g_mhz.abs(),
        branch.b_res,
        branch.slope_mhz,
        branch.df0_mhz,
        guess.mode.kappa_c_ghz * 1e3,
        guess.mode.gamma_d_ghz * 1e3,
        gamma_s * 1e3,
    ];
    let mut fit_out = None;
    if opts.full_map {
        let samples: Vec<(f64, f64, f64)> = map
            .b_grid
            .iter()
            .zip(&map.values)
            .flat_map(|(b, col)| map.f_grid.iter().zip(col).map(move |(f, v)| (*b, *f, *v)))
            .collect();
        let residuals = |x: &[f64]| -> Vec<f64> {
            let mode = CavityMode {
                f0_ghz: f0 + x[3] * 1e-3,
                kappa_c_ghz: x[4] * 1e-3,
                gamma_d_ghz: x[5] * 1e-3,
                ..guess.mode.clone()
            };
            samples
                .iter()
                .map(|&(b, f, v)| {
                    let bath = SpinBath {
                        f_s_ghz: mode.f0_ghz + x[2] * 1e-3 * (b - x[1]),
                        gamma_s_ghz: x[6] * 1e-3,
                        g_eff_ghz: x[0] * 1e-3,
                    };
                    s21(f, &mode, &bath).norm() - v
                })
                .collect()
        };
        let scales: Vec<f64> = values.iter().map(|v| v.abs().max(1e-3)).collect();
        let names = [
            "g_eff", "b_res", "slope", "f0", "kappa_c", "gamma_d", "gamma_s",
        ];
        let out = levenberg_marquardt(residuals, &values, &scales, &names, &LmOptions::default())?;
        if !out.converged {
            return Err(Error::NonConvergence {
                iterations: out.iterations,
                residual: out.rms(),
            });
        }
        values = out.params.clone();
        fit_out = Some(out);
    }

    let named = [
        ("g_eff_GHz", values[0].abs() * 1e-3, "GHz"),
        ("b_res_mT", values[1], "mT"),
        ("f_s_slope_GHz_per_mT", values[2] * 1e-3, "GHz/mT"),
        ("f0_GHz", f0 + values[3] * 1e-3, "GHz"),
        ("kappa_c_GHz", values[4].abs() * 1e-3, "GHz"),
        ("gamma_d_GHz", values[5].abs() * 1e-3, "GHz"),
        ("gamma_s_GHz", values[6].abs() * 1e-3, "GHz"),
    ];
    let params = named
        .iter()
        .map(|(n, v, u)| FitParam {
            name: (*n).into(),
            value: *v,
            unit: (*u).into(),
        })
        .collect();
    Ok(match fit_out {
        Some(out) => FitResult::from_outcome(&out, params),
        None => FitResult {
            params,
            residual: f64::NAN,
            iterations: 0,
            converged: true,
            grad_norm: f64::NAN,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mode() -> CavityMode {
        CavityMode::new("WGH211", 7.46, 5e-5, 1e-4, 0.53).unwrap()
    }

    fn grids() -> (Vec<f64>, Vec<f64>) {
        let b: Vec<f64> = (0..61).map(|k| 42.0 + 2.0 * k as f64 / 60.0).collect();
        let f: Vec<f64> = (0..301).map(|k| 7.445 + 0.03 * k as f64 / 300.0).collect();
        (b, f)
    }

    #[test]
    fn normal_modes_split_by_twice_g() {
        // equal damping on both modes leaves the splitting at exactly 2g
        let (lo, hi) = normal_modes(7.0, 1e-4, 7.0, 2e-4, 3e-3);
        assert_relative_eq!(hi.re - lo.re, 6e-3, max_relative = 1e-12);
    }

    #[test]
    fn parabolic_refinement_is_exact_for_parabola() {
        let f: Vec<f64> = (0..11).map(|k| k as f64).collect();
        let col: Vec<f64> = f
            .iter()
            .map(|x| 10.0 - (x - 4.3f64).powi(2))
            .map(|v: f64| v.max(0.0))
            .collect();
        let map = TransmissionMap::new(vec![0.0], f, vec![col]).unwrap();
        let p = extract_peaks(&map, 0.1);
        assert_relative_eq!(p[0].f_ghz[0], 4.3, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_roundtrip() {
        let (b, f) = grids();
        let map = linear_alc_map(&mode(), 1e-3, 2.6e-3, 43.0, 0.028, &b, &f).unwrap();
        let guess = AlcMapGuess {
            mode: mode(),
            gamma_s_ghz: 1.5e-3,
            slope_ghz_per_mt: 0.02,
        };
        let fit = fit_alc_map(&map, &guess, &MapFitOptions::default()).unwrap();
        assert_relative_eq!(fit.get("g_eff_GHz").unwrap(), 2.6e-3, max_relative = 1e-4);
        assert_relative_eq!(
            fit.get("f_s_slope_GHz_per_mT").unwrap(),
            0.028,
            max_relative = 1e-4
        );
    }

    #[test]
    fn uncoupled_map_has_no_crossing() {
        let (b, f) = grids();
        let map = linear_alc_map(&mode(), 1e-3, 0.0, 43.0, 0.028, &b, &f).unwrap();
        let guess = AlcMapGuess {
            mode: mode(),
            gamma_s_ghz: 1e-3,
            slope_ghz_per_mt: 0.028,
        };
        assert!(matches!(
            fit_alc_map(&map, &guess, &MapFitOptions::default()),
            Err(Error::NoCrossing { .. })
        ));
    }

    #[test]
    fn samples_roundtrip() {
        let (b, f) = grids();
        let map = linear_alc_map(&mode(), 1e-3, 2e-3, 43.0, 0.028, &b[..3], &f[..4]).unwrap();
        let mut s = Vec::new();
        for (i, bb) in map.b_grid.iter().enumerate() {
            for (j, ff) in map.f_grid.iter().enumerate() {
                s.push((*bb, *ff, map.values[i][j]));
            }
        }
        s.reverse();
        assert_eq!(TransmissionMap::from_samples(&s).unwrap(), map);
        s.pop();
        assert!(TransmissionMap::from_samples(&s).is_err());
    }
}
