//! Observables derived from a level diagram: transition frequencies and
//! matrix elements, avoided level crossings, and state composition.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spinham::{FieldModel, LevelDiagram, Mj, Spin, SpinSystem, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub from: Mj,
    pub to: Mj,
    pub f_ghz: f64,
    /// |<to| S+ + S- |from>|
    pub element: f64,
    /// Minimum photon number, |m_from - m_to|.
    pub order: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AvoidedCrossing {
    pub pair: (Mj, Mj),
    pub b_c_mt: f64,
    pub gap_ghz: f64,
    /// Half the minimum splitting.
    pub g_lz_ghz: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hybridization {
    pub label: Mj,
    pub composition: Vec<(Mj, f64)>,
}

impl Hybridization {
    pub fn weight(&self, m: Mj) -> f64 {
        self.composition
            .iter()
            .find(|(k, _)| *k == m)
            .map_or(0.0, |(_, w)| *w)
    }

    pub fn dominant(&self) -> (Mj, f64) {
        self.composition
            .iter()
            .copied()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty composition")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionCurve {
    pub from: Mj,
    pub to: Mj,
    pub b_mt: Vec<f64>,
    pub f_ghz: Vec<f64>,
}

impl TransitionCurve {
    pub fn label(&self) -> String {
        format!("{}->{}", self.from, self.to)
    }
}

fn transverse_drive(dim: usize) -> DMatrix<C64> {
    let spin = Spin::from_twice(dim as u32 - 1).expect("dimension >= 2");
    let ops = crate::spinham::spin_operators(spin);
    ops.s_plus + ops.s_minus
}

/// All level pairs at field `b_mt`, lower-energy branch first.
pub fn transitions(diagram: &LevelDiagram, b_mt: f64) -> Result<Vec<Transition>> {
    let energies = diagram.energies_at(b_mt)?;
    let n = diagram.n_branches();
    let states: Vec<DVector<C64>> = (0..n)
        .map(|i| diagram.state_at(i, b_mt))
        .collect::<Result<_>>()?;
    let drive = transverse_drive(diagram.model.dim());
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let (lo, hi) = if energies[i] <= energies[j] {
                (i, j)
            } else {
                (j, i)
            };
            let element = (states[hi].adjoint() * &drive * &states[lo])[(0, 0)].norm();
            out.push(Transition {
                from: diagram.labels[lo],
                to: diagram.labels[hi],
                f_ghz: energies[hi] - energies[lo],
                element,
                order: diagram.labels[lo].order_to(diagram.labels[hi]),
            });
        }
    }
    Ok(out)
}

/// The transition between two labelled branches at `b_mt`.
pub fn transition_between(
    diagram: &LevelDiagram,
    from: Mj,
    to: Mj,
    b_mt: f64,
) -> Result<Transition> {
    transitions(diagram, b_mt)?
        .into_iter()
        .find(|t| (t.from == from && t.to == to) || (t.from == to && t.to == from))
        .ok_or_else(|| Error::UnknownLabel(format!("{from}->{to}")))
}

pub fn hybridization(diagram: &LevelDiagram, label: Mj, b_mt: f64) -> Result<Hybridization> {
    let branch = diagram.branch(label)?;
    Ok(Hybridization {
        label,
        composition: diagram.weights_at(branch, b_mt)?,
    })
}

/// Splitting between the two eigenstates that project most strongly onto
/// the reference pair `refs`.
fn pair_gap(model: &FieldModel, refs: &[DVector<C64>; 2], b_mt: f64) -> f64 {
    let es = model.resolved_eigensystem(b_mt);
    let mut proj: Vec<(f64, usize)> = (0..es.values.len())
        .map(|j| {
            let v = es.vectors.column(j);
            let w = refs
                .iter()
                .map(|r| (r.adjoint() * v)[(0, 0)].norm_sqr())
                .sum::<f64>();
            (w, j)
        })
        .collect();
    proj.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    (es.values[proj[0].1] - es.values[proj[1].1]).abs()
}

const SCAN_POINTS: usize = 401;
const GOLDEN_TOL_MT: f64 = 1e-9;

/// Locates the minimum splitting between two labelled branches inside `interval`.
pub fn find_alc(
    diagram: &LevelDiagram,
    pair: (Mj, Mj),
    interval: (f64, f64),
) -> Result<AvoidedCrossing> {
    let (lo, hi) = interval;
    if !(lo < hi) {
        return Err(Error::param(
            "interval",
            "lower bound must be below upper bound",
        ));
    }
    let ia = diagram.branch(pair.0)?;
    let ib = diagram.branch(pair.1)?;
    let refs = [diagram.state_at(ia, lo)?, diagram.state_at(ib, lo)?];
    // the upper end must also be inside the diagram
    diagram.bracket(hi)?;
    let gap = |b: f64| pair_gap(&diagram.model, &refs, b);
    let no_crossing = || Error::NoCrossing {
        a: pair.0.to_string(),
        b: pair.1.to_string(),
        lo_mt: lo,
        hi_mt: hi,
    };

    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let scan: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| gap(lo + step * k as f64))
        .collect();
    let kmin = (0..SCAN_POINTS)
        .min_by(|&a, &b| scan[a].total_cmp(&scan[b]))
        .unwrap();
    if kmin == 0 || kmin == SCAN_POINTS - 1 {
        return Err(no_crossing());
    }
    let (b_c, g) = golden_section(
        gap,
        lo + step * (kmin - 1) as f64,
        lo + step * (kmin + 1) as f64,
        GOLDEN_TOL_MT,
    );
    if g > scan[0].min(scan[SCAN_POINTS - 1]) {
        return Err(no_crossing());
    }
    Ok(AvoidedCrossing {
        pair,
        b_c_mt: b_c,
        gap_ghz: g,
        g_lz_ghz: g / 2.0,
    })
}

/// Golden-section minimization on a bracket; returns (argmin, min).
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap()
}

/// Frequency curves f(B) for the requested branch pairs.
pub fn transition_map(
    sys: &SpinSystem,
    b_grid: &[f64],
    pairs: &[(Mj, Mj)],
) -> Result<Vec<TransitionCurve>> {
    let diagram = sys.sweep(b_grid)?;
    curves_from_diagram(&diagram, pairs)
}

pub fn curves_from_diagram(
    diagram: &LevelDiagram,
    pairs: &[(Mj, Mj)],
) -> Result<Vec<TransitionCurve>> {
    pairs
        .iter()
        .map(|&(from, to)| {
            let a = diagram.branch(from)?;
            let b = diagram.branch(to)?;
            let f_ghz = diagram
                .energies
                .iter()
                .map(|e| (e[b] - e[a]).abs())
                .collect();
            Ok(TransitionCurve {
                from,
                to,
                b_mt: diagram.b_grid.clone(),
                f_ghz,
            })
        })
        .collect()
}
