//! Weighted least squares and IRLS logistic regression, both with an
//! intercept in position 0 of the parameter vector.

use super::newton::{self, Objective};
use super::{Design, FittedModel, Response};
use crate::linalg::{Cholesky, SymMatrix};

fn rows_used(weights: &[f64]) -> Vec<usize> {
    (0..weights.len()).filter(|&i| weights[i] > 0.0).collect()
}

/// Accumulates `w * x̃ x̃ᵀ` (upper triangle) with `x̃ = [1, row]`.
#[inline]
fn add_outer(m: &mut SymMatrix, row: &[f64], w: f64) {
    let p = row.len();
    m.add(0, 0, w);
    for j in 0..p {
        let wx = w * row[j];
        m.add(0, j + 1, wx);
        for k in j..p {
            m.add(j + 1, k + 1, wx * row[k]);
        }
    }
}

pub(super) fn fit_linear(design: &Design, weights: &[f64]) -> Result<FittedModel, Vec<usize>> {
    let Response::Continuous(y) = design.response() else {
        unreachable!("linear design carries a continuous response")
    };
    let p = design.n_cols();
    let dim = p + 1;
    let rows = rows_used(weights);
    let mut xtx = SymMatrix::zeros(dim);
    let mut xty = vec![0.0; dim];
    for &i in &rows {
        let (w, row) = (weights[i], design.row(i));
        add_outer(&mut xtx, row, w);
        xty[0] += w * y[i];
        for j in 0..p {
            xty[j + 1] += w * row[j] * y[i];
        }
    }
    xtx.symmetrize_from_upper();
    let chol = Cholesky::new(&xtx)?;
    let beta = chol.solve(&xty);

    let mut rss = 0.0;
    let mut total_w = 0.0;
    for &i in &rows {
        let fitted: f64 = beta[0]
            + design
                .row(i)
                .iter()
                .zip(&beta[1..])
                .map(|(x, b)| x * b)
                .sum::<f64>();
        rss += weights[i] * (y[i] - fitted).powi(2);
        total_w += weights[i];
    }
    let sigma2 = rss / (total_w - dim as f64);
    let mut covariance = chol.inverse();
    for i in 0..dim {
        for j in 0..dim {
            covariance.set(i, j, covariance.get(i, j) * sigma2);
        }
    }
    let ll = -0.5 * total_w * ((2.0 * std::f64::consts::PI * rss / total_w).ln() + 1.0);
    Ok(FittedModel {
        family: design.family(),
        intercept: Some(beta[0]),
        coefficients: beta[1..].to_vec(),
        covariance,
        converged: beta.iter().all(|b| b.is_finite()),
        iterations: 1,
        log_likelihood: ll,
        log_likelihood_trace: vec![ll],
    })
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(super) fn fit_logistic(design: &Design, weights: &[f64]) -> Result<FittedModel, Vec<usize>> {
    let Response::Binary(y) = design.response() else {
        unreachable!("logistic design carries a binary response")
    };
    let p = design.n_cols();
    let rows = rows_used(weights);
    let eval = |beta: &[f64]| {
        let mut ll = 0.0;
        let mut grad = vec![0.0; p + 1];
        let mut info = SymMatrix::zeros(p + 1);
        for &i in &rows {
            let (w, row) = (weights[i], design.row(i));
            let mut eta = beta[0];
            for j in 0..p {
                eta += row[j] * beta[j + 1];
            }
            let mu = sigmoid(eta);
            ll += w * (y[i] * eta - softplus(eta));
            let r = w * (y[i] - mu);
            grad[0] += r;
            for j in 0..p {
                grad[j + 1] += r * row[j];
            }
            add_outer(&mut info, row, w * mu * (1.0 - mu));
        }
        info.symmetrize_from_upper();
        Objective { ll, grad, info }
    };
    let fit = newton::maximize(p + 1, eval)?;
    Ok(FittedModel {
        family: design.family(),
        intercept: Some(fit.beta[0]),
        coefficients: fit.beta[1..].to_vec(),
        covariance: fit.covariance,
        converged: fit.converged,
        iterations: fit.iterations,
        log_likelihood: fit.log_likelihood,
        log_likelihood_trace: fit.trace,
    })
}
