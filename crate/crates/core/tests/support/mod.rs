//! Reference computations shared by the oracle and acceptance tests.

use nalgebra::{DMatrix, Matrix3};
use spinsweep::spinham::C64;

/// Cyclic Jacobi diagonalization of a real symmetric matrix.
pub fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut e: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Real 2n x 2n embedding [[Re, -Im], [Im, Re]]; each eigenvalue appears twice.
pub fn real_embedding(h: &DMatrix<C64>) -> DMatrix<f64> {
    let n = h.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Diabatic survival for `i dc/dτ = 2π H c`, `H = [[aτ/2, 1], [1, -aτ/2]]`,
/// integrated with RK4 in the interaction picture from -T to T.
pub fn lz_oracle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let t_end = 2000.0 / a;
    // interaction picture: c0' = -i 2π e^{iφ} c1, c1' = -i 2π e^{-iφ} c0, φ = π a τ²
    let rhs = |tau: f64, c: [C64; 2]| -> [C64; 2] {
        let phase = C64::from_polar(1.0, std::f64::consts::PI * a * tau * tau);
        let mi = C64::new(0.0, -two_pi);
        [mi * phase * c[1], mi * phase.conj() * c[0]]
    };
    let add = |c: [C64; 2], k: [C64; 2], h: f64| [c[0] + k[0] * h, c[1] + k[1] * h];
    let mut c = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let mut tau = -t_end;
    while tau < t_end {
        let h = (0.05 / (two_pi * (1.0 + a * tau.abs()))).min(t_end - tau);
        let k1 = rhs(tau, c);
        let k2 = rhs(tau + h / 2.0, add(c, k1, h / 2.0));
        let k3 = rhs(tau + h / 2.0, add(c, k2, h / 2.0));
        let k4 = rhs(tau + h, add(c, k3, h));
        for i in 0..2 {
            c[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
        tau += h;
    }
    c[0].norm_sqr()
}

/// exp(M t) by scaling and squaring a 30-term Taylor series.
pub fn expm_series(m: &Matrix3<f64>, t: f64) -> Matrix3<f64> {
    let a = m * t;
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for k in 1..=30 {
        term = term * a / k as f64;
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}
