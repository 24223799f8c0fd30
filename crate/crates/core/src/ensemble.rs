//! Population bookkeeping for the spin ensemble: thermal occupation, the
//! frozen zero-field state, and Landau-Zener transfer during field sweeps.
//!
//! # Landau-Zener probability in frequency units
//!
//! For two diabatic levels with coupling `a` (half the minimum splitting) whose
//! energy difference changes at rate `alpha`, the diabatic survival probability is
//! `P = exp(-2π a² / (ħ |alpha|))`. With `a = h g` and `alpha = h s r`, where `g` is
//! the coupling in Hz, `s` the slope of the diabatic frequency difference in Hz/mT
//! and `r` the sweep rate in mT/s, this becomes
//!
//! ```text
//! P = exp(-(2π)² g² / (|s| r))
//! ```
//!
//! Populations are moved classically: coherences are dropped, and at each
//! crossing the diabatic fraction `P` stays on its diabatic state.

use serde::{Deserialize, Serialize};

use crate::cavity::{BOLTZMANN, PLANCK};
use crate::error::{Error, Result};
use crate::spectra::{find_alc, AvoidedCrossing};
use crate::spinham::{LevelDiagram, Mj, SpinSystem};

/// h / k_B in K per GHz.
pub const H_OVER_KB_K_PER_GHZ: f64 = PLANCK * 1e9 / BOLTZMANN;

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationVector {
    pub labels: Vec<Mj>,
    pub counts: Vec<f64>,
    pub total: f64,
}

impl PopulationVector {
    pub fn new(labels: Vec<Mj>, counts: Vec<f64>) -> Result<Self> {
        if labels.len() != counts.len() {
            return Err(Error::param("counts", "one count per label is required"));
        }
        if counts.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::param(
                "counts",
                "occupations must be finite and non-negative",
            ));
        }
        let total = counts.iter().sum();
        Ok(PopulationVector {
            labels,
            counts,
            total,
        })
    }

    pub fn get(&self, label: Mj) -> Result<f64> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .map(|i| self.counts[i])
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn fraction(&self, label: Mj) -> Result<f64> {
        Ok(self.get(label)? / self.total)
    }

    pub fn sum(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// |sum(counts) - total| / total
    pub fn conservation_error(&self) -> f64 {
        if self.total == 0.0 {
            return self.sum().abs();
        }
        (self.sum() - self.total).abs() / self.total
    }
}

/// Thermal occupation of levels with `energies_ghz` at `temperature_k`.
pub fn boltzmann_counts(
    energies_ghz: &[f64],
    temperature_k: f64,
    n_total: f64,
) -> Result<Vec<f64>> {
    if !(temperature_k > 0.0) {
        return Err(Error::param("T_K", "temperature must be positive (K)"));
    }
    let e_min = energies_ghz.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies_ghz
        .iter()
        .map(|e| (-(e - e_min) * H_OVER_KB_K_PER_GHZ / temperature_k).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| n_total * w / z).collect())
}

pub fn boltzmann(
    labels: &[Mj],
    energies_ghz: &[f64],
    temperature_k: f64,
    n_total: f64,
) -> Result<PopulationVector> {
    let counts = boltzmann_counts(energies_ghz, temperature_k, n_total)?;
    Ok(PopulationVector {
        labels: labels.to_vec(),
        counts,
        total: n_total,
    })
}

/// Zero-field diagram used to label and populate the frozen state.
fn zero_field_diagram(sys: &SpinSystem) -> Result<LevelDiagram> {
    sys.sweep(&[0.0, 0.1])
}

/// Thermal state at zero field carried unchanged to finite field.
///
/// Members of a degenerate zero-field pair receive identical occupations.
pub fn frozen_state(
    sys: &SpinSystem,
    temperature_k: f64,
    n_total: f64,
) -> Result<PopulationVector> {
    let d = zero_field_diagram(sys)?;
    let energies = &d.energies[0];
    let mut counts = boltzmann_counts(energies, temperature_k, n_total)?;
    let scale = energies.iter().fold(1.0_f64, |a, e| a.max(e.abs()));
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && energies[order[end]] - energies[order[end - 1]] < 1e-9 * scale {
            end += 1;
        }
        let share =
            order[start..end].iter().map(|&i| counts[i]).sum::<f64>() / (end - start) as f64;
        for &i in &order[start..end] {
            counts[i] = share;
        }
        start = end;
    }
    Ok(PopulationVector {
        labels: d.labels.clone(),
        counts,
        total: n_total,
    })
}

/// Diabatic survival probability for one passage through `alc`.
pub fn lz_probability(
    alc: &AvoidedCrossing,
    slope_ghz_per_mt: f64,
    rate_mt_per_min: f64,
) -> Result<f64> {
    lz_probability_from_coupling(alc.g_lz_ghz, slope_ghz_per_mt, rate_mt_per_min)
}

pub fn lz_probability_from_coupling(
    g_lz_ghz: f64,
    slope_ghz_per_mt: f64,
    rate_mt_per_min: f64,
) -> Result<f64> {
    if slope_ghz_per_mt == 0.0 || !slope_ghz_per_mt.is_finite() {
        return Err(Error::ZeroSlope);
    }
    if !(rate_mt_per_min > 0.0) {
        return Err(Error::param(
            "rate_mT_per_min",
            "sweep rate must be positive (mT/min)",
        ));
    }
    let g_hz = g_lz_ghz * 1e9;
    let sweep_hz_per_s = slope_ghz_per_mt.abs() * 1e9 * rate_mt_per_min / 60.0;
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok((-(two_pi * two_pi) * g_hz * g_hz / sweep_hz_per_s).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepProtocol {
    pub b_start_mt: f64,
    pub b_turn_mt: f64,
    pub b_end_mt: f64,
    pub rate_mt_per_min: f64,
    pub temperature_k: f64,
    /// Single-photon decays applied instantly, `(from, to)` by dominant character.
    pub relax_fast: Vec<(Mj, Mj)>,
}

impl SweepProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_mt_per_min > 0.0) {
            return Err(Error::param("rate_mT_per_min", "must be positive (mT/min)"));
        }
        if !(self.temperature_k > 0.0) {
            return Err(Error::param("T_K", "must be positive (K)"));
        }
        if self.b_start_mt > self.b_turn_mt || self.b_end_mt > self.b_turn_mt {
            return Err(Error::param(
                "b_turn_mT",
                "must not be below b_start_mT or b_end_mT",
            ));
        }
        if self.b_start_mt < 0.0 || self.b_end_mt < 0.0 {
            return Err(Error::param("b_start_mT", "fields must be >= 0 mT"));
        }
        for (from, to) in &self.relax_fast {
            if from.order_to(*to) != 1 {
                return Err(Error::param(
                    "relax_fast",
                    format!(
                        "{from}->{to} is an order-{} process; only single-photon decays relax",
                        from.order_to(*to)
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Single-photon cascade towards the ±S edges of the ladder.
pub fn default_relaxation(basis: &[Mj]) -> Vec<(Mj, Mj)> {
    let top = basis.iter().map(|m| m.twice().abs()).max().unwrap_or(0);
    let mut out = Vec::new();
    for &m in basis {
        let t = m.twice();
        if t != 0 && t.abs() < top {
            out.push((m, Mj::from_twice(t + 2 * t.signum())));
        }
    }
    out.sort_by_key(|(from, _)| std::cmp::Reverse(from.twice().abs()));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub grid_step_mt: f64,
    /// Half width of the window handed to the crossing search.
    pub alc_half_window_mt: f64,
    /// Diabatic slopes are fitted between these distances from the crossing.
    pub slope_inner_mt: f64,
    pub slope_outer_mt: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            grid_step_mt: 0.1,
            alc_half_window_mt: 5.0,
            slope_inner_mt: 2.0,
            slope_outer_mt: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LzEvent {
    pub pair: (Mj, Mj),
    #[serde(rename = "b_c_mT")]
    pub b_c_mt: f64,
    #[serde(rename = "gap_GHz")]
    pub gap_ghz: f64,
    #[serde(rename = "slope_GHz_per_mT")]
    pub slope_ghz_per_mt: f64,
    pub p_diabatic: f64,
    pub upward: bool,
}

#[derive(Clone, Debug)]
pub struct SweepTrajectory {
    pub b_mt: Vec<f64>,
    pub populations: Vec<PopulationVector>,
    pub events: Vec<LzEvent>,
}

impl SweepTrajectory {
    pub fn last(&self) -> &PopulationVector {
        self.populations.last().expect("trajectory is never empty")
    }

    /// State on the upward leg at `b_mt`, clamped to the leg's field range.
    pub fn up_state_at(&self, b_mt: f64) -> &PopulationVector {
        let turn = self.turn_index();
        let k = self.b_mt[..=turn]
            .iter()
            .rposition(|b| *b <= b_mt + 1e-9)
            .unwrap_or(0);
        &self.populations[k]
    }

    fn turn_index(&self) -> usize {
        let mut k = 0;
        while k + 1 < self.b_mt.len() && self.b_mt[k + 1] > self.b_mt[k] {
            k += 1;
        }
        k
    }

    pub fn max_conservation_error(&self) -> f64 {
        self.populations
            .iter()
            .map(|p| p.conservation_error())
            .fold(0.0, f64::max)
    }
}

struct Crossing {
    alc: AvoidedCrossing,
    branches: (usize, usize),
    slope: f64,
    /// Tracked branches keep their diabatic character through the crossing.
    diabatic_tracking: bool,
}

fn grid_between(lo: f64, hi: f64, step: f64, extra: &[f64]) -> Vec<f64> {
    let n = ((hi - lo) / step).round().max(1.0) as usize;
    let mut g: Vec<f64> = (0..=n)
        .map(|k| lo + (hi - lo) * k as f64 / n as f64)
        .collect();
    g.extend(extra.iter().copied().filter(|b| *b > lo && *b < hi));
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    g
}

fn fit_slope(diagram: &LevelDiagram, branch: usize, lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = diagram
        .b_grid
        .iter()
        .zip(&diagram.energies)
        .filter(|(b, _)| **b >= lo && **b <= hi)
        .map(|(b, e)| (*b, e[branch]))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mb = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let me = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mb) * (p.1 - me)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mb).powi(2)).sum();
    Some(sxy / sxx)
}

/// Relative slope of the two diabatic levels, from fits on both sides of `b_c`.
fn diabatic_slope(
    diagram: &LevelDiagram,
    pair: (usize, usize),
    b_c: f64,
    opts: &SweepOptions,
) -> Result<f64> {
    let mut estimates = Vec::new();
    for (lo, hi) in [
        (b_c - opts.slope_outer_mt, b_c - opts.slope_inner_mt),
        (b_c + opts.slope_inner_mt, b_c + opts.slope_outer_mt),
    ] {
        if let (Some(a), Some(b)) = (
            fit_slope(diagram, pair.0, lo, hi),
            fit_slope(diagram, pair.1, lo, hi),
        ) {
            estimates.push((a - b).abs());
        }
    }
    if estimates.is_empty() {
        return Err(Error::AlcNotFound(format!(
            "no room to fit diabatic slopes around {b_c:.3} mT"
        )));
    }
    Ok(estimates.iter().sum::<f64>() / estimates.len() as f64)
}

fn locate_crossings(diagram: &LevelDiagram, opts: &SweepOptions) -> Result<Vec<Crossing>> {
    let n = diagram.n_branches();
    let grid = &diagram.b_grid;
    let (glo, ghi) = diagram.range();
    let mut found: Vec<Crossing> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d: Vec<f64> = diagram.energies.iter().map(|e| e[i] - e[j]).collect();
            let mut candidates: Vec<(usize, bool)> = Vec::new();
            // sign changes of the tracked difference: branches passed through each other
            let mut last: Option<(usize, f64)> = None;
            for (k, &v) in d.iter().enumerate() {
                if v.abs() < 1e-9 {
                    continue;
                }
                if let Some((kp, vp)) = last {
                    if vp.signum() != v.signum() {
                        candidates.push(((kp + k) / 2, true));
                    }
                }
                last = Some((k, v));
            }
            // interior minima where the branches exchange character
            for k in 1..d.len().saturating_sub(1) {
                let (a, b, c) = (d[k - 1].abs(), d[k].abs(), d[k + 1].abs());
                if b < a && b <= c {
                    let w = ((opts.slope_inner_mt / (grid[1] - grid[0])).round() as usize).max(1);
                    let kl = k.saturating_sub(w);
                    let kr = (k + w).min(d.len() - 1);
                    if diagram.character(i, kl) != diagram.character(i, kr)
                        && diagram.character(i, kl) == diagram.character(j, kr)
                    {
                        candidates.push((k, false));
                    }
                }
            }
            for (k, diabatic_tracking) in candidates {
                let lo = (grid[k] - opts.alc_half_window_mt).max(glo);
                let hi = (grid[k] + opts.alc_half_window_mt).min(ghi);
                let pair = (diagram.labels[i], diagram.labels[j]);
                let alc = match find_alc(diagram, pair, (lo, hi)) {
                    Ok(a) => a,
                    // a crossing pinned against the end of the diagram is never traversed
                    Err(Error::NoCrossing { .. }) if grid[k] - glo < 1.0 || ghi - grid[k] < 1.0 => {
                        continue
                    }
                    Err(Error::NoCrossing { .. }) => {
                        return Err(Error::AlcNotFound(format!(
                            "{}/{} near {:.3} mT",
                            pair.0, pair.1, grid[k]
                        )))
                    }
                    Err(e) => return Err(e),
                };
                if found
                    .iter()
                    .any(|c| c.branches == (i, j) && (c.alc.b_c_mt - alc.b_c_mt).abs() < 0.5)
                {
                    continue;
                }
                let slope = diabatic_slope(diagram, (i, j), alc.b_c_mt, opts)?;
                found.push(Crossing {
                    alc,
                    branches: (i, j),
                    slope,
                    diabatic_tracking,
                });
            }
        }
    }
    found.sort_by(|a, b| a.alc.b_c_mt.total_cmp(&b.alc.b_c_mt));
    Ok(found)
}

fn apply_relaxation(diagram: &LevelDiagram, k: usize, rules: &[(Mj, Mj)], counts: &mut [f64]) {
    if rules.is_empty() {
        return;
    }
    let n = diagram.n_branches();
    let chars: Vec<Mj> = (0..n).map(|b| diagram.character(b, k)).collect();
    let find = |m: Mj| chars.iter().position(|&c| c == m);
    // repeated passes let chains cascade completely
    for _ in 0..n {
        let mut moved = false;
        for &(from, to) in rules {
            if let (Some(a), Some(b)) = (find(from), find(to)) {
                if counts[a] > 0.0 {
                    counts[b] += counts[a];
                    counts[a] = 0.0;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
}

fn apply_crossing(c: &Crossing, rate: f64, upward: bool, counts: &mut [f64]) -> Result<LzEvent> {
    let p = lz_probability(&c.alc, c.slope, rate)?;
    // fraction exchanged between the two tracked branches
    let moved = if c.diabatic_tracking { 1.0 - p } else { p };
    let (i, j) = c.branches;
    let (a, b) = (counts[i], counts[j]);
    counts[i] = (1.0 - moved) * a + moved * b;
    counts[j] = moved * a + (1.0 - moved) * b;
    Ok(LzEvent {
        pair: c.alc.pair,
        b_c_mt: c.alc.b_c_mt,
        gap_ghz: c.alc.gap_ghz,
        slope_ghz_per_mt: c.slope,
        p_diabatic: p,
        upward,
    })
}

/// Runs the up/down field protocol from `initial` (matched to branches by label).
pub fn run_sweep(
    sys: &SpinSystem,
    protocol: &SweepProtocol,
    initial: &PopulationVector,
    opts: &SweepOptions,
) -> Result<SweepTrajectory> {
    protocol.validate()?;
    if !(opts.grid_step_mt > 0.0) {
        return Err(Error::param("grid_step_mT", "must be positive (mT)"));
    }
    let lo = protocol.b_start_mt.min(protocol.b_end_mt);
    let hi = protocol.b_turn_mt;
    if hi <= lo {
        // no field motion
        return Ok(SweepTrajectory {
            b_mt: vec![lo],
            populations: vec![initial.clone()],
            events: Vec::new(),
        });
    }
    let grid = grid_between(
        lo,
        hi,
        opts.grid_step_mt,
        &[protocol.b_start_mt, protocol.b_end_mt],
    );
    let diagram = sys.sweep(&grid)?;
    let crossings = locate_crossings(&diagram, opts)?;

    let mut counts = vec![0.0; diagram.n_branches()];
    for (label, c) in initial.labels.iter().zip(&initial.counts) {
        counts[diagram.branch(*label)?] += c;
    }
    let total = initial.total;
    let snapshot = |counts: &[f64]| PopulationVector {
        labels: diagram.labels.clone(),
        counts: counts.to_vec(),
        total,
    };

    let k_start = grid
        .iter()
        .position(|b| (b - protocol.b_start_mt).abs() < 1e-9)
        .unwrap_or(0);
    let k_end = grid
        .iter()
        .position(|b| (b - protocol.b_end_mt).abs() < 1e-9)
        .unwrap_or(0);
    let k_turn = grid.len() - 1;

    let mut b_out = vec![grid[k_start]];
    let mut pops = vec![snapshot(&counts)];
    let mut events = Vec::new();

    for k in (k_start + 1)..=k_turn {
        for c in crossings
            .iter()
            .filter(|c| c.alc.b_c_mt > grid[k - 1] && c.alc.b_c_mt <= grid[k])
        {
            events.push(apply_crossing(
                c,
                protocol.rate_mt_per_min,
                true,
                &mut counts,
            )?);
        }
        apply_relaxation(&diagram, k, &protocol.relax_fast, &mut counts);
        b_out.push(grid[k]);
        pops.push(snapshot(&counts));
    }
    for k in (k_end..k_turn).rev() {
        for c in crossings
            .iter()
            .rev()
            .filter(|c| c.alc.b_c_mt >= grid[k] && c.alc.b_c_mt < grid[k + 1])
        {
            events.push(apply_crossing(
                c,
                protocol.rate_mt_per_min,
                false,
                &mut counts,
            )?);
        }
        apply_relaxation(&diagram, k, &protocol.relax_fast, &mut counts);
        b_out.push(grid[k]);
        pops.push(snapshot(&counts));
    }
    Ok(SweepTrajectory {
        b_mt: b_out,
        populations: pops,
        events,
    })
}

/// Ensemble coupling `g0 sqrt(N p_lower)` for thermal occupation at the probe field.
pub fn equilibrium_coupling_curve(
    sys: &SpinSystem,
    g0_ghz: f64,
    lower: Mj,
    b_probe_mt: f64,
    n_total: f64,
    temperatures_k: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let energies = energies_at_field(sys, b_probe_mt)?;
    let idx = energies
        .0
        .iter()
        .position(|&l| l == lower)
        .ok_or_else(|| Error::UnknownLabel(lower.to_string()))?;
    temperatures_k
        .iter()
        .map(|&t| {
            let counts = boltzmann_counts(&energies.1, t, n_total)?;
            Ok((t, g0_ghz * counts[idx].sqrt()))
        })
        .collect()
}

/// Coupling `g0 sqrt(N_lower)` for the frozen state prepared at each temperature.
pub fn frozen_coupling_curve(
    sys: &SpinSystem,
    g0_ghz: f64,
    lower: Mj,
    n_total: f64,
    temperatures_k: &[f64],
) -> Result<Vec<(f64, f64)>> {
    temperatures_k
        .iter()
        .map(|&t| {
            Ok((
                t,
                g0_ghz * frozen_state(sys, t, n_total)?.get(lower)?.sqrt(),
            ))
        })
        .collect()
}

/// Labels and energies of tracked branches at one field, tracked up from zero.
pub fn energies_at_field(sys: &SpinSystem, b_mt: f64) -> Result<(Vec<Mj>, Vec<f64>)> {
    let hi = b_mt.max(0.2);
    let d = sys.sweep(&grid_between(0.0, hi, 0.1, &[b_mt]))?;
    Ok((d.labels.clone(), d.energies_at(b_mt)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinham::{Spin, StevensCoefficients};
    use approx::assert_relative_eq;

    fn m(t: i32) -> Mj {
        Mj::from_twice(t)
    }

    #[test]
    fn equal_energies_give_uniform() {
        let p = boltzmann_counts(&[1.0; 8], 0.05, 8.0).unwrap();
        assert!(p.iter().all(|c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn cold_limit_fills_ground() {
        let p = boltzmann_counts(&[0.0, 1.0, 2.0], 1e-6, 10.0).unwrap();
        assert_eq!(p, vec![10.0, 0.0, 0.0]);
    }

    #[test]
    fn ln2_gap_gives_two_to_one() {
        let t = 0.05;
        let de = t * 2f64.ln() / H_OVER_KB_K_PER_GHZ;
        let p = boltzmann_counts(&[0.0, de], t, 3.0).unwrap();
        assert_relative_eq!(p[0] / p[1], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_non_positive_temperature() {
        assert!(boltzmann_counts(&[0.0, 1.0], 0.0, 1.0).is_err());
        assert!(boltzmann_counts(&[0.0, 1.0], -1.0, 1.0).is_err());
    }

    #[test]
    fn lz_limits() {
        assert_eq!(lz_probability_from_coupling(0.0, 0.1, 2.0).unwrap(), 1.0);
        assert!(lz_probability_from_coupling(1e-5, 0.1, 1e-9).unwrap() < 1e-12);
        assert_eq!(
            lz_probability_from_coupling(1e-5, 0.0, 2.0),
            Err(Error::ZeroSlope)
        );
        assert!(lz_probability_from_coupling(1e-5, 0.1, 0.0).is_err());
    }

    #[test]
    fn default_relaxation_cascades_outwards() {
        let basis = Spin::new(3.5).unwrap().basis();
        let rules = default_relaxation(&basis);
        assert_eq!(rules.len(), 6);
        assert!(rules.contains(&(m(-5), m(-7))));
        assert!(rules.contains(&(m(1), m(3))));
        assert!(rules.iter().all(|(a, b)| a.order_to(*b) == 1));
    }

    #[test]
    fn protocol_rejects_multiphoton_relaxation() {
        let p = SweepProtocol {
            b_start_mt: 0.0,
            b_turn_mt: 10.0,
            b_end_mt: 5.0,
            rate_mt_per_min: 2.0,
            temperature_k: 0.02,
            relax_fast: vec![(m(7), m(-7))],
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn frozen_state_high_temperature_is_uniform() {
        let cf = StevensCoefficients {
            b20: -0.48,
            ..Default::default()
        };
        let sys = SpinSystem::new(Spin::new(3.5).unwrap(), 1.99, cf, 0.0).unwrap();
        let p = frozen_state(&sys, 1e4, 8.0).unwrap();
        assert!(p.counts.iter().all(|c| (c - 1.0).abs() < 1e-3));
    }
}
