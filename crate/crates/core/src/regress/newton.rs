//! Damped Newton–Raphson maximization shared by the logistic and Cox fits.

use super::{LOGLIK_TOLERANCE, MAX_ITERATIONS};
use crate::linalg::{Cholesky, SymMatrix};

/// Log-likelihood with its gradient and observed information (negative
/// Hessian) at one parameter point.
pub(crate) struct Objective {
    pub ll: f64,
    pub grad: Vec<f64>,
    pub info: SymMatrix,
}

pub(crate) struct NewtonFit {
    pub beta: Vec<f64>,
    pub covariance: SymMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub trace: Vec<f64>,
}

const MAX_HALVINGS: usize = 40;

fn step_from(beta: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    beta.iter().zip(dir).map(|(b, d)| b + t * d).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes `eval` from the origin. Halves the step whenever the
/// log-likelihood would decrease, so the accepted sequence is non-decreasing.
///
/// Returns the dependent columns when the information matrix is singular at
/// the starting point (a rank-deficient design).
pub(crate) fn maximize(
    dim: usize,
    eval: impl Fn(&[f64]) -> Objective,
) -> Result<NewtonFit, Vec<usize>> {
    let mut beta = vec![0.0; dim];
    let mut obj = eval(&beta);
    let mut trace = vec![obj.ll];
    let mut converged = false;
    let mut iterations = 0;

    if obj.ll.is_finite() {
        for it in 1..=MAX_ITERATIONS {
            let chol = match Cholesky::new(&obj.info) {
                Ok(c) => c,
                Err(cols) if it == 1 => return Err(cols),
                Err(_) => break,
            };
            let dir = chol.solve(&obj.grad);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand = step_from(&beta, &dir, t);
                let cobj = eval(&cand);
                if cobj.ll.is_finite() && cobj.ll >= obj.ll {
                    accepted = Some((cand, cobj));
                    break;
                }
                t *= 0.5;
            }
            let Some((cand, cobj)) = accepted else {
                // No ascent direction left at working precision.
                converged = inf_norm(&dir) <= 1e-6 * (1.0 + inf_norm(&beta));
                break;
            };
            iterations = it;
            let change = (cobj.ll - obj.ll).abs();
            let step = t * inf_norm(&dir);
            beta = cand;
            obj = cobj;
            trace.push(obj.ll);
            if change <= LOGLIK_TOLERANCE * obj.ll.abs() && step <= 1e-3 * (1.0 + inf_norm(&beta)) {
                converged = true;
                break;
            }
        }
    }

    if converged {
        // One more full step from the converged point removes the residual
        // error left by the likelihood-based stopping rule.
        if let Ok(chol) = Cholesky::new(&obj.info) {
            let cand = step_from(&beta, &chol.solve(&obj.grad), 1.0);
            let cobj = eval(&cand);
            if cobj.ll.is_finite() && cobj.ll >= obj.ll {
                beta = cand;
                obj = cobj;
                trace.push(obj.ll);
            }
        }
    }

    let covariance = match Cholesky::new(&obj.info) {
        Ok(c) => c.inverse(),
        Err(_) => {
            converged = false;
            let mut m = SymMatrix::zeros(dim);
            for i in 0..dim {
                for j in 0..dim {
                    m.set(i, j, f64::NAN);
                }
            }
            m
        }
    };
    if beta.iter().any(|b| !b.is_finite()) {
        converged = false;
    }
    Ok(NewtonFit {
        beta,
        covariance,
        converged,
        iterations,
        log_likelihood: obj.ll,
        trace,
    })
}
