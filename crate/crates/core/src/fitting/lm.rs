//! Damped least-squares (Levenberg-Marquardt) driver with box bounds.
//!
//! Minimizes `½‖r(p)‖²` for weighted residuals `r = (y − f(p))/σ`. The
//! damping term is Marquardt's `μ·diag(JᵀJ)`, updated with Nielsen's gain
//! ratio rule. Parameters with equal lower and upper bounds are held fixed.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub(crate) trait Problem {
    fn n_data(&self) -> usize;
    /// `(y − f(p)) / σ`
    fn residuals(&self, p: &[f64], out: &mut [f64]);
    /// `∂f/∂p_j / σ` for every `j` in `free`, one column each.
    fn jacobian(&self, p: &[f64], free: &[usize], jac: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    pub max_iter: usize,
    /// Relative step size below which the iteration stops.
    pub xtol: f64,
    /// Bound on the cosine between the residual and any Jacobian column.
    pub gtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iter: 200,
            xtol: 1e-10,
            gtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LmReport {
    pub params: Vec<f64>,
    pub cost: f64,
    pub n_iter: usize,
    pub converged: bool,
    /// Cost after the start and after every accepted step.
    pub history: Vec<f64>,
    pub free: Vec<usize>,
    /// Weighted Jacobian at the final point, free columns only.
    pub jacobian: DMatrix<f64>,
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn clamp_into(p: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in p.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(lo, hi);
    }
}

pub(crate) fn minimize<P: Problem>(
    problem: &P,
    p0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: LmOptions,
) -> Result<LmReport> {
    let n = problem.n_data();
    let free: Vec<usize> = (0..p0.len()).filter(|&j| lower[j] < upper[j]).collect();
    let m = free.len();
    let mut p = p0.to_vec();
    clamp_into(&mut p, lower, upper);

    let mut r = vec![0.0; n];
    problem.residuals(&p, &mut r);
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return Err(Error::Numerical("residuals are not finite at the initial point".into()));
    }
    let mut history = vec![cost];
    let mut jac = DMatrix::zeros(n, m);
    if m == 0 {
        return Ok(LmReport {
            params: p,
            cost,
            n_iter: 0,
            converged: true,
            history,
            free,
            jacobian: jac,
        });
    }
    problem.jacobian(&p, &free, &mut jac);
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Jacobian is not finite at the initial point".into()));
    }

    let mut mu = -1.0;
    let mut nu = 2.0;
    let mut converged = false;
    let mut n_iter = 0;
    let mut trial = vec![0.0; n];

    'outer: while n_iter < opts.max_iter {
        n_iter += 1;
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        let diag: Vec<f64> = (0..m).map(|j| a[(j, j)].max(1e-300)).collect();

        if cost == 0.0 {
            converged = true;
            break;
        }
        let rnorm = (2.0 * cost).sqrt();
        let cosine = (0..m)
            .map(|j| g[j].abs() / (diag[j].sqrt() * rnorm))
            .fold(0.0, f64::max);
        if cosine <= opts.gtol {
            converged = true;
            break;
        }
        if mu < 0.0 {
            mu = 1e-3;
        }

        loop {
            let mut damped = a.clone();
            for j in 0..m {
                damped[(j, j)] += mu * diag[j];
            }
            let Some(chol) = damped.cholesky() else {
                mu *= nu;
                nu *= 2.0;
                if mu > 1e30 {
                    break 'outer;
                }
                continue;
            };
            let h = chol.solve(&g);

            let mut cand = p.clone();
            for (k, &j) in free.iter().enumerate() {
                cand[j] += h[k];
            }
            clamp_into(&mut cand, lower, upper);
            let step = DVector::from_iterator(m, free.iter().map(|&j| cand[j] - p[j]));

            let small = free
                .iter()
                .zip(step.iter())
                .all(|(&j, s)| s.abs() <= opts.xtol * (p[j].abs() + opts.xtol));
            if small {
                converged = true;
                break 'outer;
            }

            problem.residuals(&cand, &mut trial);
            let new_cost = cost_of(&trial);
            let predicted = step.dot(&g) - 0.5 * step.dot(&(&a * &step));
            let gain = if predicted > 0.0 {
                (cost - new_cost) / predicted
            } else {
                -1.0
            };

            if new_cost.is_finite() && new_cost < cost && gain > 0.0 {
                p = cand;
                std::mem::swap(&mut r, &mut trial);
                cost = new_cost;
                history.push(cost);
                problem.jacobian(&p, &free, &mut jac);
                if jac.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical("Jacobian is not finite".into()));
                }
                mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * gain - 1.0).powi(3));
                nu = 2.0;
                break;
            }
            mu *= nu;
            nu *= 2.0;
            if mu > 1e30 {
                // No descent is possible from here: a numerical minimum.
                converged = true;
                break 'outer;
            }
        }
    }

    Ok(LmReport {
        params: p,
        cost,
        n_iter,
        converged,
        history,
        free,
        jacobian: jac,
    })
}

/// `(JᵀJ)⁻¹` for a weighted Jacobian, or a rank-deficiency error.
pub(crate) fn inverse_normal_matrix(jac: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = jac.ncols();
    let a = jac.transpose() * jac;
    let scale: Vec<f64> = (0..m).map(|j| a[(j, j)].sqrt()).collect();
    if let Some(j) = scale.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::RankDeficient(format!("parameter {j} does not affect the model")));
    }
    let mut corr = a.clone();
    for i in 0..m {
        for j in 0..m {
            corr[(i, j)] /= scale[i] * scale[j];
        }
    }
    let eig = corr.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 1e-14 * hi) {
        return Err(Error::RankDeficient(format!(
            "condition estimate {:.3e}",
            hi / lo.max(0.0)
        )));
    }
    let inv = corr
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("normal matrix is singular".into()))?;
    let mut cov = inv;
    for i in 0..m {
        for j in 0..m {
            cov[(i, j)] /= scale[i] * scale[j];
        }
    }
    // Symmetrize against rounding.
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(cov)
}
