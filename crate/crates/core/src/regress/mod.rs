//! Linear, logistic and Cox proportional hazards regression.
//!
//! All three families are fit with non-negative frequency weights so that a
//! bootstrap sample is represented by per-row multiplicities instead of
//! physically replicated rows. Linear and logistic models carry an
//! intercept; the Cox model does not (it is absorbed by the baseline hazard).

mod cox;
mod design;
mod glm;
mod newton;

use thiserror::Error;

use crate::linalg::SymMatrix;

pub use cox::{partial_likelihood, CoxObjective};
pub use design::{Design, DesignError, Family, Group, Response};
pub(crate) use glm::sigmoid;

/// Maximum Newton / IRLS iterations before a fit is declared non-converged.
pub const MAX_ITERATIONS: usize = 50;
/// Relative log-likelihood change that ends the iteration.
pub const LOGLIK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FitError {
    #[error("weights have length {found}, design has {expected} rows")]
    WeightLength { expected: usize, found: usize },
    #[error("weights must be finite and non-negative")]
    BadWeight,
    #[error("need at least 2 rows with positive weight, found {0}")]
    TooFewRows(usize),
    #[error("singular information matrix; dependent columns: {}", .columns.join(", "))]
    Singular { columns: Vec<String> },
    #[error("no events among weighted rows")]
    NoEvents,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoreError {
    #[error("model has {expected} coefficients, design has {found} columns")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown group '{0}'")]
    UnknownGroup(String),
    #[error("group '{0}' spans several columns and has no single Wald row")]
    MultiColumnGroup(String),
    #[error("model did not converge")]
    NotConverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub family: Family,
    /// Present for linear and logistic models.
    pub intercept: Option<f64>,
    /// One coefficient per design column.
    pub coefficients: Vec<f64>,
    /// Inverse observed information. Row/column 0 is the intercept when the
    /// model has one, followed by the design columns.
    pub covariance: SymMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood at the start and after every accepted step.
    pub log_likelihood_trace: Vec<f64>,
}

impl FittedModel {
    fn offset(&self) -> usize {
        usize::from(self.intercept.is_some())
    }

    /// Standard errors of the design-column coefficients.
    pub fn standard_errors(&self) -> Vec<f64> {
        let off = self.offset();
        (0..self.coefficients.len())
            .map(|j| self.covariance.get(j + off, j + off).sqrt())
            .collect()
    }

    /// Linear predictor of one design row.
    #[inline]
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let mut s = self.intercept.unwrap_or(0.0);
        for (x, b) in row.iter().zip(&self.coefficients) {
            s += x * b;
        }
        s
    }

    /// Copy of the model with the given coefficients set to zero.
    pub fn with_zeroed(&self, columns: &[usize]) -> Self {
        let mut m = self.clone();
        for &j in columns {
            m.coefficients[j] = 0.0;
        }
        m
    }
}

/// Fits the design's family using frequency `weights` (one per row).
pub fn fit(design: &Design, weights: &[f64]) -> Result<FittedModel, FitError> {
    if weights.len() != design.n_rows() {
        return Err(FitError::WeightLength {
            expected: design.n_rows(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(FitError::BadWeight);
    }
    let used = weights.iter().filter(|w| **w > 0.0).count();
    if used < 2 {
        return Err(FitError::TooFewRows(used));
    }
    let singular = |cols: Vec<usize>, offset: usize| FitError::Singular {
        columns: cols
            .into_iter()
            .map(|c| {
                if c < offset {
                    "(intercept)".to_string()
                } else {
                    design.column_names()[c - offset].clone()
                }
            })
            .collect(),
    };
    match design.family() {
        Family::Linear => glm::fit_linear(design, weights).map_err(|c| singular(c, 1)),
        Family::Logistic => glm::fit_logistic(design, weights).map_err(|c| singular(c, 1)),
        Family::Cox => cox::fit_cox(design, weights).map_err(|e| match e {
            cox::CoxFitError::NoEvents => FitError::NoEvents,
            cox::CoxFitError::Singular(c) => singular(c, 0),
        }),
    }
}

/// Scores every row of `design`. For Cox models a higher score means a
/// higher hazard.
pub fn linear_predictor(model: &FittedModel, design: &Design) -> Result<Vec<f64>, ScoreError> {
    check_dims(model, design)?;
    Ok((0..design.n_rows())
        .map(|i| model.score_row(design.row(i)))
        .collect())
}

/// Scores the listed rows only.
pub fn linear_predictor_rows(
    model: &FittedModel,
    design: &Design,
    rows: &[usize],
) -> Result<Vec<f64>, ScoreError> {
    check_dims(model, design)?;
    Ok(rows
        .iter()
        .map(|&i| model.score_row(design.row(i)))
        .collect())
}

fn check_dims(model: &FittedModel, design: &Design) -> Result<(), ScoreError> {
    if model.coefficients.len() != design.n_cols() {
        return Err(ScoreError::DimensionMismatch {
            expected: model.coefficients.len(),
            found: design.n_cols(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldRow {
    pub group_name: String,
    pub beta_hat: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Two-sided normal tail probability `2 (1 - Φ(|z|))`, via `erfc`, which
/// keeps full relative precision far into the tail.
pub fn two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

pub fn wald_row(model: &FittedModel, design: &Design, group: &str) -> Result<WaldRow, ScoreError> {
    if !model.converged {
        return Err(ScoreError::NotConverged);
    }
    check_dims(model, design)?;
    let g = design
        .group(group)
        .ok_or_else(|| ScoreError::UnknownGroup(group.to_string()))?;
    let [col] = g.columns[..] else {
        return Err(ScoreError::MultiColumnGroup(group.to_string()));
    };
    let beta_hat = model.coefficients[col];
    let se = model.standard_errors()[col];
    let z = beta_hat / se;
    Ok(WaldRow {
        group_name: group.to_string(),
        beta_hat,
        se,
        z,
        p_value: if beta_hat == 0.0 { 1.0 } else { two_sided_p(z) },
    })
}

/// Wald rows for every single-column group, in group order. Multi-column
/// (spline) groups have no single coefficient and are skipped.
pub fn wald_table(model: &FittedModel, design: &Design) -> Result<Vec<WaldRow>, ScoreError> {
    design
        .groups()
        .iter()
        .filter(|g| g.columns.len() == 1)
        .map(|g| wald_row(model, design, &g.name))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SurvivalOutcome;

    fn linear_design(x: &[f64], y: &[f64]) -> Design {
        Design::new(
            vec![("x".into(), x.to_vec())],
            None,
            Family::Linear,
            Response::Continuous(y.to_vec()),
        )
        .unwrap()
    }

    #[test]
    fn linear_exact_interpolation() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        let m = fit(&linear_design(&x, &y), &[1.0; 4]).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(m.intercept.unwrap().abs() < 1e-12);
        let pred = linear_predictor(&m, &linear_design(&x, &y)).unwrap();
        let rss: f64 = pred.iter().zip(&y).map(|(p, y)| (p - y).powi(2)).sum();
        assert!(rss < 1e-20);
    }

    #[test]
    fn weight_validation() {
        let d = linear_design(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]);
        assert!(matches!(
            fit(&d, &[1.0; 2]),
            Err(FitError::WeightLength { .. })
        ));
        assert_eq!(fit(&d, &[1.0, -1.0, 1.0]), Err(FitError::BadWeight));
        assert_eq!(fit(&d, &[0.0, 0.0, 3.0]), Err(FitError::TooFewRows(1)));
    }

    #[test]
    fn singular_design_names_column() {
        let d = Design::new(
            vec![
                ("a".into(), vec![1.0, 2.0, 3.0, 4.0]),
                ("b".into(), vec![2.0, 4.0, 6.0, 8.0]),
            ],
            None,
            Family::Linear,
            Response::Continuous(vec![1.0, 3.0, 2.0, 5.0]),
        )
        .unwrap();
        match fit(&d, &[1.0; 4]) {
            Err(FitError::Singular { columns }) => assert_eq!(columns, vec!["b".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cox_without_events() {
        let d = Design::new(
            vec![("x".into(), vec![0.0, 1.0, 0.5])],
            None,
            Family::Cox,
            Response::Survival(vec![
                SurvivalOutcome::new(1.0, false),
                SurvivalOutcome::new(2.0, false),
                SurvivalOutcome::new(3.0, true),
            ]),
        )
        .unwrap();
        assert_eq!(fit(&d, &[1.0, 1.0, 0.0]), Err(FitError::NoEvents));
    }

    #[test]
    fn zero_coefficients_give_equal_scores() {
        let d = linear_design(&[1.0, 5.0, -3.0], &[0.0, 1.0, 2.0]);
        let mut m = fit(&d, &[1.0; 3]).unwrap();
        m.coefficients = vec![0.0];
        let s = linear_predictor(&m, &d).unwrap();
        assert!(s.iter().all(|v| *v == m.intercept.unwrap()));
    }

    #[test]
    fn scoring_dimension_mismatch() {
        let d = linear_design(&[1.0, 5.0, -3.0], &[0.0, 1.0, 2.0]);
        let mut m = fit(&d, &[1.0; 3]).unwrap();
        m.coefficients.push(1.0);
        assert!(matches!(
            linear_predictor(&m, &d),
            Err(ScoreError::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn p_values() {
        assert_eq!(two_sided_p(0.0), 1.0);
        assert!((two_sided_p(1.96) - 0.05).abs() < 1e-3);
        assert!((two_sided_p(-1.96) - two_sided_p(1.96)).abs() == 0.0);
        // 2(1 - Φ(3)) = 0.0026997960632601866
        assert!((two_sided_p(3.0) - 0.002_699_796_063_260_187).abs() < 1e-15);
        let mut last = 1.0;
        for k in 1..200 {
            let p = two_sided_p(f64::from(k) * 0.05);
            assert!(p < last);
            last = p;
        }
    }
}
