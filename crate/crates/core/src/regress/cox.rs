//! Cox proportional hazards fit by Newton–Raphson on the Breslow partial
//! likelihood with frequency weights.

use super::newton::{self, Objective};
use super::{Design, FittedModel, Response};
use crate::linalg::SymMatrix;

pub(super) enum CoxFitError {
    NoEvents,
    Singular(Vec<usize>),
}

/// Weighted rows in decreasing-time order, covariates centered at their
/// weighted mean. Centering leaves the partial likelihood unchanged and keeps
/// `exp(η)` well scaled.
struct RiskSets {
    p: usize,
    x: Vec<f64>,
    w: Vec<f64>,
    event: Vec<bool>,
    runs: Vec<(usize, usize)>,
}

impl RiskSets {
    fn new(design: &Design, weights: &[f64]) -> Self {
        let Response::Survival(outcome) = design.response() else {
            unreachable!("cox design carries a survival response")
        };
        let p = design.n_cols();
        let mut center = vec![0.0; p];
        let mut total = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                total += w;
                for (c, x) in center.iter_mut().zip(design.row(i)) {
                    *c += w * x;
                }
            }
        }
        center.iter_mut().for_each(|c| *c /= total);

        let order = design.time_order();
        let mut rs = RiskSets {
            p,
            x: Vec::new(),
            w: Vec::new(),
            event: Vec::new(),
            runs: Vec::new(),
        };
        for &(start, end) in design.tie_runs() {
            let first = rs.w.len();
            for &i in &order[start..end] {
                if weights[i] > 0.0 {
                    rs.x.extend(design.row(i).iter().zip(&center).map(|(x, c)| x - c));
                    rs.w.push(weights[i]);
                    rs.event.push(outcome[i].event);
                }
            }
            if rs.w.len() > first {
                rs.runs.push((first, rs.w.len()));
            }
        }
        rs
    }

    fn has_events(&self) -> bool {
        self.event.iter().any(|e| *e)
    }

    fn eval(&self, beta: &[f64]) -> Objective {
        let p = self.p;
        let mut ll = 0.0;
        let mut grad = vec![0.0; p];
        let mut info = SymMatrix::zeros(p);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        let mut xsum = vec![0.0; p];
        let mut mean = vec![0.0; p];
        for &(start, end) in &self.runs {
            let mut d = 0.0;
            xsum.iter_mut().for_each(|v| *v = 0.0);
            for r in start..end {
                let x = &self.x[r * p..(r + 1) * p];
                let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
                let risk = self.w[r] * eta.exp();
                s0 += risk;
                for j in 0..p {
                    let rx = risk * x[j];
                    s1[j] += rx;
                    for k in j..p {
                        s2[j * p + k] += rx * x[k];
                    }
                }
                if self.event[r] {
                    d += self.w[r];
                    ll += self.w[r] * eta;
                    for j in 0..p {
                        xsum[j] += self.w[r] * x[j];
                    }
                }
            }
            if d > 0.0 {
                ll -= d * s0.ln();
                for j in 0..p {
                    mean[j] = s1[j] / s0;
                    grad[j] += xsum[j] - d * mean[j];
                }
                for j in 0..p {
                    for k in j..p {
                        info.add(j, k, d * (s2[j * p + k] / s0 - mean[j] * mean[k]));
                    }
                }
            }
        }
        info.symmetrize_from_upper();
        Objective { ll, grad, info }
    }
}

/// Breslow log partial likelihood, its gradient (score vector) and the
/// observed information at `beta`.
#[derive(Debug, Clone)]
pub struct CoxObjective {
    pub log_likelihood: f64,
    pub score: Vec<f64>,
    pub information: SymMatrix,
}

pub fn partial_likelihood(design: &Design, weights: &[f64], beta: &[f64]) -> CoxObjective {
    let obj = RiskSets::new(design, weights).eval(beta);
    CoxObjective {
        log_likelihood: obj.ll,
        score: obj.grad,
        information: obj.info,
    }
}

pub(super) fn fit_cox(design: &Design, weights: &[f64]) -> Result<FittedModel, CoxFitError> {
    let rs = RiskSets::new(design, weights);
    if !rs.has_events() {
        return Err(CoxFitError::NoEvents);
    }
    let p = design.n_cols();
    let fit = newton::maximize(p, |b| rs.eval(b)).map_err(CoxFitError::Singular)?;
    Ok(FittedModel {
        family: design.family(),
        intercept: None,
        coefficients: fit.beta,
        covariance: fit.covariance,
        converged: fit.converged,
        iterations: fit.iterations,
        log_likelihood: fit.log_likelihood,
        log_likelihood_trace: fit.trace,
    })
}
