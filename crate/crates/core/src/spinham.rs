//! Spin Hamiltonian of a half-integer spin in a tetragonal crystal field.
//!
//! All energies are frequencies (E/h) in GHz and all fields are in mT.
//! Matrices are written in the |m> basis ordered m = S, S-1, ..., -S.
//!
//! Crystal-field operators use the operator-equivalent (Stevens) polynomials,
//! with X = S(S+1):
//!
//! ```text
//! O20 = 3 Sz^2 - X
//! O40 = 35 Sz^4 - (30X - 25) Sz^2 + 3X^2 - 6X
//! O60 = 231 Sz^6 - (315X - 735) Sz^4 + (105X^2 - 525X + 294) Sz^2
//!       - 5X^3 + 40X^2 - 60X
//! O44 = (S+^4 + S-^4) / 2
//! O64 = [(11 Sz^2 - X - 38)(S+^4 + S-^4) + (S+^4 + S-^4)(11 Sz^2 - X - 38)] / 4
//! ```
//!
//! The Zeeman term uses a single polar tilt of the field away from the c-axis
//! in the x-z plane: `g (mu_B/h) B (cos(tilt) Sz + sin(tilt) Sx)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Bohr magneton over Planck constant, GHz/T.
pub const MU_B_OVER_H_GHZ_PER_T: f64 = 13.996245;
/// Same constant per millitesla.
pub const MU_B_OVER_H_GHZ_PER_MT: f64 = MU_B_OVER_H_GHZ_PER_T * 1e-3;

const HERMITIAN_TOL: f64 = 1e-12;
const DEGENERACY_TOL: f64 = 1e-9;
const AMBIGUITY_TOL: f64 = 1e-6;
/// Minimum overlap between consecutive tracked states before a grid step is flagged.
pub const OVERLAP_FLOOR: f64 = 0.5;

/// Magnetic quantum number stored as 2m so half-integers stay exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Mj(i32);

impl Mj {
    pub const fn from_twice(twice_m: i32) -> Self {
        Mj(twice_m)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    /// Minimum photon number connecting two diabatic states.
    pub fn order_to(self, other: Mj) -> u32 {
        (self.0 - other.0).unsigned_abs() / 2
    }
}

impl fmt::Display for Mj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 > 0 {
            "+"
        } else if self.0 < 0 {
            "-"
        } else {
            ""
        };
        let a = self.0.abs();
        if a % 2 == 1 {
            write!(f, "{sign}{a}/2")
        } else {
            write!(f, "{sign}{}", a / 2)
        }
    }
}

impl FromStr for Mj {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s
            .trim()
            .trim_start_matches('|')
            .trim_end_matches('>')
            .trim_end_matches('⟩');
        let bad = || Error::Data(format!("cannot parse magnetic quantum number `{s}`"));
        let (neg, body) = match t.as_bytes().first() {
            Some(b'-') => (true, &t[1..]),
            Some(b'+') => (false, &t[1..]),
            _ => (false, t),
        };
        let twice = match body.split_once('/') {
            Some((num, "2")) => num.trim().parse::<i32>().map_err(|_| bad())?,
            Some(_) => return Err(bad()),
            None => 2 * body.trim().parse::<i32>().map_err(|_| bad())?,
        };
        if twice < 0 {
            return Err(bad());
        }
        Ok(Mj(if neg { -twice } else { twice }))
    }
}

impl From<Mj> for String {
    fn from(m: Mj) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Mj {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Spin magnitude, kept as 2S.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Spin {
    two_s: u32,
}

impl Spin {
    pub fn new(s: f64) -> Result<Self> {
        let two_s = 2.0 * s;
        if !two_s.is_finite() || two_s < 1.0 || (two_s - two_s.round()).abs() > 1e-9 {
            return Err(Error::InvalidSpin(s));
        }
        Ok(Spin {
            two_s: two_s.round() as u32,
        })
    }

    pub fn from_twice(two_s: u32) -> Result<Self> {
        if two_s == 0 {
            return Err(Error::InvalidSpin(0.0));
        }
        Ok(Spin { two_s })
    }

    pub fn s(self) -> f64 {
        f64::from(self.two_s) / 2.0
    }

    pub fn dim(self) -> usize {
        self.two_s as usize + 1
    }

    /// S(S+1)
    pub fn casimir(self) -> f64 {
        let s = self.s();
        s * (s + 1.0)
    }

    /// Basis labels, m = S down to -S.
    pub fn basis(self) -> Vec<Mj> {
        (0..self.dim())
            .map(|k| Mj(self.two_s as i32 - 2 * k as i32))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StevensCoefficients {
    pub b20: f64,
    pub b40: f64,
    pub b60: f64,
    pub b44: f64,
    pub b64: f64,
}

impl StevensCoefficients {
    pub fn to_array(self) -> [f64; 5] {
        [self.b20, self.b40, self.b60, self.b44, self.b64]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        StevensCoefficients {
            b20: a[0],
            b40: a[1],
            b60: a[2],
            b44: a[3],
            b64: a[4],
        }
    }

    pub const NAMES: [&'static str; 5] = ["b20", "b40", "b60", "b44", "b64"];
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinSystem {
    pub spin: Spin,
    pub g_factor: f64,
    pub cf: StevensCoefficients,
    pub tilt_rad: f64,
}

impl SpinSystem {
    pub fn new(spin: Spin, g_factor: f64, cf: StevensCoefficients, tilt_rad: f64) -> Result<Self> {
        if !(g_factor > 0.0 && g_factor.is_finite()) {
            return Err(Error::param("g_factor", "must be positive and finite"));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&tilt_rad) {
            return Err(Error::param("tilt_rad", "must lie in [0, pi/2)"));
        }
        if cf.to_array().iter().any(|c| !c.is_finite()) {
            return Err(Error::param(
                "cf",
                "crystal-field coefficients must be finite",
            ));
        }
        Ok(SpinSystem {
            spin,
            g_factor,
            cf,
            tilt_rad,
        })
    }

    /// Field-independent part (crystal field) and Zeeman part per mT.
    pub fn field_model(&self) -> FieldModel {
        let ops = stevens_operators(self.spin);
        let cf = self.cf;
        let h0 = ops.o20.0.scale(cf.b20)
            + ops.o40.0.scale(cf.b40)
            + ops.o60.0.scale(cf.b60)
            + ops.o44.0.scale(cf.b44)
            + ops.o64.0.scale(cf.b64);
        let s = spin_operators(self.spin);
        let zeeman = self.g_factor * MU_B_OVER_H_GHZ_PER_MT;
        let h1 =
            (s.sz.0.scale(self.tilt_rad.cos()) + s.sx.0.scale(self.tilt_rad.sin())).scale(zeeman);
        FieldModel {
            h0,
            h1,
            basis: self.spin.basis(),
        }
    }

    pub fn hamiltonian(&self, b_mt: f64) -> HermitianMatrix {
        self.field_model().at(b_mt)
    }

    pub fn sweep(&self, b_grid: &[f64]) -> Result<LevelDiagram> {
        sweep_levels(&self.field_model(), b_grid)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(DMatrix<C64>);

impl HermitianMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::param("matrix", "must be square"));
        }
        let deviation = hermitian_deviation(&m);
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        if deviation > HERMITIAN_TOL * scale {
            return Err(Error::NonHermitian { deviation });
        }
        Ok(HermitianMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }
}

fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub struct SpinOperators {
    pub sx: HermitianMatrix,
    pub sy: HermitianMatrix,
    pub sz: HermitianMatrix,
    pub s_plus: DMatrix<C64>,
    pub s_minus: DMatrix<C64>,
}

/// Angular-momentum matrices from the ladder operators.
pub fn spin_operators(spin: Spin) -> SpinOperators {
    let n = spin.dim();
    let basis = spin.basis();
    let s = spin.s();
    let mut sp = DMatrix::<C64>::zeros(n, n);
    let mut sz = DMatrix::<C64>::zeros(n, n);
    for (k, m) in basis.iter().enumerate() {
        let m = m.value();
        sz[(k, k)] = C64::new(m, 0.0);
        // S+ |m> = sqrt(S(S+1) - m(m+1)) |m+1>, and |m+1> sits at row k-1
        if k > 0 {
            sp[(k - 1, k)] = C64::new((s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let sm = sp.adjoint();
    let half = C64::new(0.5, 0.0);
    let sx = (&sp + &sm) * half;
    let sy = (&sp - &sm) * C64::new(0.0, -0.5);
    SpinOperators {
        sx: HermitianMatrix(sx),
        sy: HermitianMatrix(sy),
        sz: HermitianMatrix(sz),
        s_plus: sp,
        s_minus: sm,
    }
}

pub struct StevensOperators {
    pub o20: HermitianMatrix,
    pub o40: HermitianMatrix,
    pub o60: HermitianMatrix,
    pub o44: HermitianMatrix,
    pub o64: HermitianMatrix,
}

pub fn stevens_operators(spin: Spin) -> StevensOperators {
    let n = spin.dim();
    let x = spin.casimir();
    let ops = spin_operators(spin);
    let id = DMatrix::<C64>::identity(n, n);
    let sz = ops.sz.0.clone();
    let sz2 = &sz * &sz;
    let sz4 = &sz2 * &sz2;
    let sz6 = &sz4 * &sz2;
    let r = |v: f64| C64::new(v, 0.0);

    let o20 = &sz2 * r(3.0) - &id * r(x);
    let o40 = &sz4 * r(35.0) - &sz2 * r(30.0 * x - 25.0) + &id * r(3.0 * x * x - 6.0 * x);
    let o60 = &sz6 * r(231.0) - &sz4 * r(315.0 * x - 735.0)
        + &sz2 * r(105.0 * x * x - 525.0 * x + 294.0)
        + &id * r(-5.0 * x.powi(3) + 40.0 * x * x - 60.0 * x);

    let sp4 = ops.s_plus.pow(4);
    let sm4 = ops.s_minus.pow(4);
    let quartic = &sp4 + &sm4;
    let o44 = &quartic * r(0.5);
    let poly = &sz2 * r(11.0) - &id * r(x + 38.0);
    let o64 = (&poly * &quartic + &quartic * &poly) * r(0.25);

    StevensOperators {
        o20: HermitianMatrix(o20),
        o40: HermitianMatrix(o40),
        o60: HermitianMatrix(o60),
        o44: HermitianMatrix(o44),
        o64: HermitianMatrix(o64),
    }
}

/// A Hamiltonian linear in the field, `H(B) = h0 + B * h1` with B in mT.
///
/// `basis` names the diabatic state carried by each row.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel {
    pub h0: DMatrix<C64>,
    pub h1: DMatrix<C64>,
    pub basis: Vec<Mj>,
}

impl FieldModel {
    pub fn new(h0: DMatrix<C64>, h1: DMatrix<C64>, basis: Vec<Mj>) -> Result<Self> {
        let h0 = HermitianMatrix::new(h0)?.into_inner();
        let h1 = HermitianMatrix::new(h1)?.into_inner();
        if h0.shape() != h1.shape() || basis.len() != h0.nrows() {
            return Err(Error::param("model", "h0, h1 and basis dimensions differ"));
        }
        Ok(FieldModel { h0, h1, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn at(&self, b_mt: f64) -> HermitianMatrix {
        HermitianMatrix(&self.h0 + &self.h1 * C64::new(b_mt, 0.0))
    }

    /// Eigensystem with degenerate clusters rotated onto eigenvectors of dH/dB,
    /// which is the adiabatic limit approached from either side.
    pub fn resolved_eigensystem(&self, b_mt: f64) -> Eigensystem {
        let h = self.at(b_mt);
        let mut es = eigensystem(&h);
        let n = es.values.len();
        let scale = es.values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && es.values[end] - es.values[end - 1] < DEGENERACY_TOL * scale {
                end += 1;
            }
            if end - start > 1 {
                let v = es.vectors.columns(start, end - start).into_owned();
                let proj = v.adjoint() * &self.h1 * &v;
                let proj = (&proj + proj.adjoint()) * C64::new(0.5, 0.0);
                let sub = eigensystem(&HermitianMatrix(proj));
                let rotated = v * sub.vectors;
                es.vectors
                    .columns_mut(start, end - start)
                    .copy_from(&rotated);
            }
            start = end;
        }
        es
    }
}

#[derive(Clone, Debug)]
pub struct Eigensystem {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<C64>,
}

impl Eigensystem {
    /// Largest ||H v - E v|| over all pairs.
    pub fn residual(&self, h: &HermitianMatrix) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(k, &e)| {
                let v = self.vectors.column(k);
                (h.matrix() * v - v * C64::new(e, 0.0)).norm()
            })
            .fold(0.0, f64::max)
    }
}

pub fn eigensystem(h: &HermitianMatrix) -> Eigensystem {
    let eig = SymmetricEigen::new(h.0.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let n = h.dim();
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Eigensystem { values, vectors }
}

/// Rejects non-Hermitian input before diagonalizing.
pub fn eigensystem_checked(m: &DMatrix<C64>) -> Result<Eigensystem> {
    Ok(eigensystem(&HermitianMatrix::new(m.clone())?))
}

/// Eigenvalues and tracked eigenvectors over an ascending field grid.
#[derive(Clone, Debug)]
pub struct LevelDiagram {
    pub b_grid: Vec<f64>,
    /// `energies[k][branch]`, GHz.
    pub energies: Vec<Vec<f64>>,
    /// Column `branch` of `states[k]` is the tracked eigenvector at `b_grid[k]`.
    pub states: Vec<DMatrix<C64>>,
    /// Dominant |m> of each branch at the first grid point.
    pub labels: Vec<Mj>,
    /// Grid indices k where the overlap between steps k-1 and k fell below the floor.
    pub flagged: Vec<usize>,
    pub model: FieldModel,
}

impl LevelDiagram {
    pub fn n_branches(&self) -> usize {
        self.labels.len()
    }

    pub fn branch(&self, label: Mj) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn range(&self) -> (f64, f64) {
        (self.b_grid[0], *self.b_grid.last().unwrap())
    }

    /// Bracketing index k and fraction t with B = (1-t) b[k] + t b[k+1].
    pub fn bracket(&self, b_mt: f64) -> Result<(usize, f64)> {
        let (lo, hi) = self.range();
        if !(lo..=hi).contains(&b_mt) {
            return Err(Error::FieldOutOfRange {
                field_mt: b_mt,
                lo_mt: lo,
                hi_mt: hi,
            });
        }
        let k = match self.b_grid.partition_point(|&b| b <= b_mt) {
            0 => 0,
            p => (p - 1).min(self.b_grid.len() - 2),
        };
        let t = (b_mt - self.b_grid[k]) / (self.b_grid[k + 1] - self.b_grid[k]);
        Ok((k, t))
    }

    pub fn energy_at(&self, branch: usize, b_mt: f64) -> Result<f64> {
        let (k, t) = self.bracket(b_mt)?;
        Ok((1.0 - t) * self.energies[k][branch] + t * self.energies[k + 1][branch])
    }

    pub fn energies_at(&self, b_mt: f64) -> Result<Vec<f64>> {
        (0..self.n_branches())
            .map(|i| self.energy_at(i, b_mt))
            .collect()
    }

    /// Renormalized linear interpolation of the tracked eigenvector.
    pub fn state_at(&self, branch: usize, b_mt: f64) -> Result<DVector<C64>> {
        let (k, t) = self.bracket(b_mt)?;
        let a = self.states[k].column(branch);
        let b = self.states[k + 1].column(branch);
        let v = a * C64::new(1.0 - t, 0.0) + b * C64::new(t, 0.0);
        let norm = v.norm();
        Ok(if norm > 0.0 {
            v / C64::new(norm, 0.0)
        } else {
            a.into_owned()
        })
    }

    /// Squared amplitudes of a branch in the |m> basis.
    pub fn weights_at(&self, branch: usize, b_mt: f64) -> Result<Vec<(Mj, f64)>> {
        let v = self.state_at(branch, b_mt)?;
        Ok(self
            .model
            .basis
            .iter()
            .zip(v.iter())
            .map(|(&m, c)| (m, c.norm_sqr()))
            .collect())
    }

    /// Dominant |m> of a branch at grid index k.
    pub fn character(&self, branch: usize, k: usize) -> Mj {
        let col = self.states[k].column(branch);
        let best = (0..col.len())
            .max_by(|&a, &b| col[a].norm_sqr().total_cmp(&col[b].norm_sqr()))
            .unwrap_or(0);
        self.model.basis[best]
    }
}

pub fn sweep_levels(model: &FieldModel, b_grid: &[f64]) -> Result<LevelDiagram> {
    if b_grid.len() < 2 {
        return Err(Error::param("b_grid", "needs at least 2 points"));
    }
    if b_grid.iter().any(|b| !b.is_finite()) || b_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param(
            "b_grid",
            "must be finite and strictly ascending",
        ));
    }
    let n = model.dim();
    let systems: Vec<Eigensystem> = b_grid
        .par_iter()
        .map(|&b| model.resolved_eigensystem(b))
        .collect();

    let first = &systems[0];
    let labels = assign_labels(&first.vectors, &model.basis);
    let mut energies = Vec::with_capacity(b_grid.len());
    let mut states = Vec::with_capacity(b_grid.len());
    let mut flagged = Vec::new();
    energies.push(first.values.clone());
    states.push(first.vectors.clone());

    for (k, es) in systems.iter().enumerate().skip(1) {
        let prev: &DMatrix<C64> = &states[k - 1];
        let overlaps = prev.adjoint() * &es.vectors;
        let assign = assign_max_overlap(&overlaps).map_err(|_| Error::TrackingAmbiguity {
            index: k,
            field_mt: b_grid[k],
        })?;
        let mut e = vec![0.0; n];
        let mut v = DMatrix::<C64>::zeros(n, n);
        let mut low = false;
        for (branch, &j) in assign.iter().enumerate() {
            let ov = overlaps[(branch, j)];
            if ov.norm() < OVERLAP_FLOOR {
                low = true;
            }
            // fix the gauge so <prev|new> is real and positive
            let phase = if ov.norm() > 0.0 {
                ov.conj() / ov.norm()
            } else {
                C64::new(1.0, 0.0)
            };
            e[branch] = es.values[j];
            v.set_column(branch, &(es.vectors.column(j) * phase));
        }
        if low {
            flagged.push(k);
        }
        energies.push(e);
        states.push(v);
    }

    Ok(LevelDiagram {
        b_grid: b_grid.to_vec(),
        energies,
        states,
        labels,
        flagged,
        model: model.clone(),
    })
}

/// Greedy label assignment maximizing basis weight, one label per branch.
fn assign_labels(vectors: &DMatrix<C64>, basis: &[Mj]) -> Vec<Mj> {
    let n = basis.len();
    let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for branch in 0..n {
        for row in 0..n {
            entries.push((vectors[(row, branch)].norm_sqr(), branch, row));
        }
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut labels = vec![None; n];
    let mut used = vec![false; n];
    for (_, branch, row) in entries {
        if labels[branch].is_none() && !used[row] {
            labels[branch] = Some(basis[row]);
            used[row] = true;
        }
    }
    labels
        .into_iter()
        .map(|l| l.expect("every branch receives a label"))
        .collect()
}

/// Greedy assignment on |overlap|; errors when a branch's two best overlaps tie.
fn assign_max_overlap(overlaps: &DMatrix<C64>) -> std::result::Result<Vec<usize>, ()> {
    let n = overlaps.nrows();
    for i in 0..n {
        let mut row: Vec<f64> = (0..n).map(|j| overlaps[(i, j)].norm()).collect();
        row.sort_by(|a, b| b.total_cmp(a));
        if n > 1 && row[1] > 0.1 && row[0] - row[1] < AMBIGUITY_TOL {
            return Err(());
        }
    }
    let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            entries.push((overlaps[(i, j)].norm(), i, j));
        }
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assign = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, i, j) in entries {
        if assign[i] == usize::MAX && !taken[j] {
            assign[i] = j;
            taken[j] = true;
        }
    }
    Ok(assign)
}
