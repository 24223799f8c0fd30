//! Damped least squares (Levenberg-Marquardt) with central-difference Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Tolerance on the scaled gradient max_i |J_i . r| / (|J_i| |r|).
    pub gtol: f64,
    /// Relative cost change treated as stagnation.
    pub ftol: f64,
    /// Relative step treated as stagnation.
    pub xtol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 500,
            gtol: 1e-10,
            ftol: 1e-15,
            xtol: 1e-13,
            fd_step: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

impl LmOutcome {
    pub fn rms(&self) -> f64 {
        (self.cost / self.residuals.len().max(1) as f64).sqrt()
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Central-difference Jacobian; `scales` sets the step floor for parameters near zero.
pub fn numerical_jacobian<F>(
    f: &F,
    x: &[f64],
    scales: &[f64],
    rel_step: f64,
    m: usize,
) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut jac = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(scales[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        for k in 0..m {
            jac[(k, i)] = (fp[k] - fm[k]) / (2.0 * h);
        }
    }
    jac
}

pub fn levenberg_marquardt<F>(
    f: F,
    x0: &[f64],
    scales: &[f64],
    names: &[&str],
    opts: &LmOptions,
) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x);
    let m = r.len();
    if m < n {
        return Err(Error::TooFewPoints {
            points: m,
            params: n,
        });
    }
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::Data("initial residuals are not finite".into()));
    }
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = numerical_jacobian(&f, &x, scales, opts.fd_step, m);
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv;
        let jtj = jac.transpose() * &jac;
        let rnorm = rv.norm();

        for i in 0..n {
            if jtj[(i, i)] == 0.0 {
                return Err(Error::SingularJacobian(
                    names.get(i).copied().unwrap_or("?").to_string(),
                ));
            }
        }
        grad_norm = if rnorm == 0.0 {
            0.0
        } else {
            (0..n)
                .map(|i| grad[i].abs() / (jtj[(i, i)].sqrt() * rnorm))
                .fold(0.0, f64::max)
        };
        if grad_norm <= opts.gtol {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)];
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
            let rn = f(&xn);
            let cn = sum_sq(&rn);
            if cn.is_finite() && cn < cost {
                let rel_step = step
                    .iter()
                    .zip(&x)
                    .zip(scales)
                    .map(|((d, xi), s)| d.abs() / xi.abs().max(*s))
                    .fold(0.0, f64::max);
                let rel_drop = (cost - cn) / cost.max(f64::MIN_POSITIVE);
                x = xn;
                r = rn;
                cost = cn;
                history.push(cost);
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if rel_step < opts.xtol || rel_drop < opts.ftol || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left at working precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    Ok(LmOutcome {
        params: x,
        residuals: r,
        cost,
        iterations,
        converged,
        grad_norm,
        cost_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential() {
        let t: Vec<f64> = (0..40).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-1.3 * t).exp() + 0.2).collect();
        let f = |p: &[f64]| {
            t.iter()
                .zip(&y)
                .map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y)
                .collect()
        };
        let out = levenberg_marquardt(
            f,
            &[1.0, 0.5, 0.0],
            &[1.0, 1.0, 1.0],
            &["a", "k", "c"],
            &LmOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-8);
        assert!((out.params[1] - 1.3).abs() < 1e-8);
        assert!((out.params[2] - 0.2).abs() < 1e-8);
        assert!(out.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn dead_parameter_is_singular() {
        let f = |p: &[f64]| vec![p[0] - 1.0, p[0] + 1.0, 2.0 * p[0]];
        let err = levenberg_marquardt(
            f,
            &[0.3, 0.0],
            &[1.0, 1.0],
            &["a", "dead"],
            &LmOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, Error::SingularJacobian("dead".into()));
    }

    #[test]
    fn too_few_points() {
        let f = |p: &[f64]| vec![p[0] + p[1]];
        assert!(matches!(
            levenberg_marquardt(
                f,
                &[0.0, 0.0],
                &[1.0, 1.0],
                &["a", "b"],
                &LmOptions::default()
            ),
            Err(Error::TooFewPoints { .. })
        ));
    }
}
