//! Out-of-bag error, VIMP indices, marginal VIMP and stepwise errors.
//!
//! Every quantity is an average over the same set of bootstrap replicates.
//! Per replicate the inbag model is fit once, its OOB error `Err_b` is
//! computed once, and every noised or reduced error is compared against that
//! one baseline.

use std::convert::Infallible;

use rand::seq::SliceRandom;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::SurvivalOutcome;
use crate::metric::{self, MetricError};
use crate::regress::{self, Design, Family, FitError, FittedModel, Response, ScoreError};
use crate::resample::{self, BootstrapReplicate, Execution, ResampleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMethod {
    /// Score with the group's coefficients set to zero.
    #[default]
    ZeroCoefficient,
    /// Permute the group's OOB values jointly across OOB rows.
    Permute,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum VimpError {
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error("full-data fit failed: {0}")]
    FullFit(FitError),
    #[error("full-data fit did not converge")]
    FullFitNotConverged,
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("all {0} bootstrap replicates were unusable")]
    AllUnusable(usize),
    #[error("design has no variables")]
    NoGroups,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VimpOptions {
    pub bootstrap: usize,
    pub seed: u64,
    pub noise: NoiseMethod,
    /// Refit without each group (marginal VIMP).
    pub marginal: bool,
    /// Refit the nested models of the VIMP ranking.
    pub stepwise: bool,
    pub execution: Execution,
}

impl Default for VimpOptions {
    fn default() -> Self {
        Self {
            bootstrap: 1000,
            seed: 0,
            noise: NoiseMethod::ZeroCoefficient,
            marginal: true,
            stepwise: true,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VimpRow {
    pub group: String,
    /// Full-data estimate; absent for multi-column groups.
    pub beta_hat: Option<f64>,
    pub p_value: Option<f64>,
    /// Mean inbag estimate over usable replicates.
    pub beta_inbag: Option<f64>,
    pub delta: f64,
    /// OOB error of the model holding this group and every group ranked above.
    pub err_step: Option<f64>,
    pub delta_marginal: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Diagnostics {
    /// Replicates whose inbag fit failed or did not converge.
    pub non_converged: usize,
    /// Replicates whose OOB error is undefined (no usable OOB pairs/events).
    pub no_oob_events: usize,
    /// (replicate, reduced model) pairs dropped from marginal or stepwise
    /// averages because the reduced fit was degenerate.
    pub reduced_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VimpReport {
    pub family: Family,
    pub n: usize,
    pub b_used: usize,
    pub err_oob: f64,
    /// Sorted by `delta` descending, ties in group order.
    pub rows: Vec<VimpRow>,
    pub diagnostics: Diagnostics,
}

impl VimpReport {
    pub fn row(&self, group: &str) -> Option<&VimpRow> {
        self.rows.iter().find(|r| r.group == group)
    }
}

/// Prediction error of linear-predictor `scores` on `rows` of the response,
/// in percentage points.
pub fn prediction_error(
    family: Family,
    response: &Response,
    rows: &[usize],
    scores: &[f64],
) -> Result<f64, MetricError> {
    match response {
        Response::Survival(s) => {
            debug_assert_eq!(family, Family::Cox);
            let outcome: Vec<SurvivalOutcome> = rows.iter().map(|&i| s[i]).collect();
            metric::concordance_error(scores, &outcome)
        }
        Response::Continuous(y) => {
            let y: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            metric::standardized_mse_error(scores, &y)
        }
        Response::Binary(y) => {
            let y: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let probs: Vec<f64> = scores.iter().map(|&s| regress::sigmoid(s)).collect();
            metric::misclassification_error(&probs, &y)
        }
    }
}

/// Scores of the OOB rows with group `gi` noised up.
///
/// `ZeroCoefficient` scores with that group's coefficients set to zero.
/// `Permute` draws one permutation π of the OOB rows from a stream derived
/// from the replicate seed and the group index; OOB row k then takes all of
/// the group's columns from OOB row π(k).
pub fn noise_up(
    model: &FittedModel,
    design: &Design,
    replicate: &BootstrapReplicate,
    gi: usize,
    method: NoiseMethod,
) -> Vec<f64> {
    let cols = &design.groups()[gi].columns;
    let oob = &replicate.oob_rows;
    match method {
        NoiseMethod::ZeroCoefficient => {
            let zeroed = model.with_zeroed(cols);
            oob.iter()
                .map(|&i| zeroed.score_row(design.row(i)))
                .collect()
        }
        NoiseMethod::Permute => {
            let mut source = oob.clone();
            let mut rng = resample::rng_from_seed(resample::mix_seed(replicate.seed, gi as u64));
            source.shuffle(&mut rng);
            let mut row = vec![0.0; design.n_cols()];
            oob.iter()
                .zip(&source)
                .map(|(&i, &k)| {
                    row.copy_from_slice(design.row(i));
                    for &c in cols {
                        row[c] = design.get(k, c);
                    }
                    model.score_row(&row)
                })
                .collect()
        }
    }
}

fn oob_scores(model: &FittedModel, design: &Design, rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .map(|&i| model.score_row(design.row(i)))
        .collect()
}

/// OOB error of a model refit on the inbag rows of `reduced`, or `None` if
/// that fit is degenerate.
fn reduced_error(reduced: &Design, replicate: &BootstrapReplicate, weights: &[f64]) -> Option<f64> {
    let model = regress::fit(reduced, weights)
        .ok()
        .filter(|m| m.converged)?;
    let scores = oob_scores(&model, reduced, &replicate.oob_rows);
    prediction_error(
        reduced.family(),
        reduced.response(),
        &replicate.oob_rows,
        &scores,
    )
    .ok()
}

#[derive(Debug, Clone, PartialEq)]
enum Baseline {
    NotConverged,
    NoOobEvents,
    Usable(ReplicateResult),
}

#[derive(Debug, Clone, PartialEq)]
struct ReplicateResult {
    err: f64,
    noised: Vec<f64>,
    coefficients: Vec<f64>,
    marginal: Vec<Option<f64>>,
}

fn baseline_pass(
    design: &Design,
    reduced: &[Design],
    replicate: &BootstrapReplicate,
    noise: NoiseMethod,
) -> Baseline {
    let weights = replicate.weights();
    let model = match regress::fit(design, &weights) {
        Ok(m) if m.converged => m,
        _ => return Baseline::NotConverged,
    };
    let oob = &replicate.oob_rows;
    if noise == NoiseMethod::Permute && oob.len() < 2 {
        return Baseline::NoOobEvents;
    }
    let scores = oob_scores(&model, design, oob);
    let Ok(err) = prediction_error(design.family(), design.response(), oob, &scores) else {
        return Baseline::NoOobEvents;
    };
    let mut noised = Vec::with_capacity(design.groups().len());
    for gi in 0..design.groups().len() {
        let s = noise_up(&model, design, replicate, gi, noise);
        match prediction_error(design.family(), design.response(), oob, &s) {
            Ok(e) => noised.push(e),
            Err(_) => return Baseline::NoOobEvents,
        }
    }
    let marginal = reduced
        .iter()
        .map(|d| reduced_error(d, replicate, &weights))
        .collect();
    Baseline::Usable(ReplicateResult {
        err,
        noised,
        coefficients: model.coefficients,
        marginal,
    })
}

/// Mean of the `Some` entries and how many were `None`.
fn mean_present(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut missing) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                n += 1;
            }
            None => missing += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), missing)
}

/// Runs the full analysis: OOB error, VIMP for every group, and optionally
/// marginal VIMP and the stepwise errors of the VIMP ranking.
pub fn vimp_analysis(design: &Design, options: &VimpOptions) -> Result<VimpReport, VimpError> {
    let n_groups = design.groups().len();
    if n_groups == 0 {
        return Err(VimpError::NoGroups);
    }
    let full = match regress::fit(design, &vec![1.0; design.n_rows()]) {
        Ok(m) if m.converged => m,
        Ok(_) => return Err(VimpError::FullFitNotConverged),
        Err(e) => return Err(VimpError::FullFit(e)),
    };
    let replicates = resample::make_replicates(design.n_rows(), options.bootstrap, options.seed)?;

    let reduced: Vec<Design> = if options.marginal {
        (0..n_groups)
            .map(|gi| {
                let keep: Vec<usize> = (0..n_groups).filter(|&g| g != gi).collect();
                design.select_groups(&keep)
            })
            .collect()
    } else {
        Vec::new()
    };
    let baselines = resample::map_reduce(
        &replicates,
        options.execution,
        |r| Ok::<_, Infallible>(baseline_pass(design, &reduced, r, options.noise)),
        |v| v,
    )
    .unwrap_or_else(|e| match e.source {});

    let mut diagnostics = Diagnostics::default();
    let mut usable = Vec::new();
    let mut usable_reps = Vec::new();
    for (rep, b) in replicates.iter().zip(baselines) {
        match b {
            Baseline::NotConverged => diagnostics.non_converged += 1,
            Baseline::NoOobEvents => diagnostics.no_oob_events += 1,
            Baseline::Usable(r) => {
                usable.push(r);
                usable_reps.push(rep.clone());
            }
        }
    }
    if usable.is_empty() {
        return Err(VimpError::AllUnusable(replicates.len()));
    }
    let b_used = usable.len() as f64;
    let err_oob = usable.iter().map(|r| r.err).sum::<f64>() / b_used;

    let delta: Vec<f64> = (0..n_groups)
        .map(|gi| usable.iter().map(|r| r.noised[gi] - r.err).sum::<f64>() / b_used)
        .collect();
    let delta_marginal: Vec<Option<f64>> = if options.marginal {
        (0..n_groups)
            .map(|gi| {
                let (m, missing) =
                    mean_present(usable.iter().map(|r| r.marginal[gi].map(|e| e - r.err)));
                diagnostics.reduced_excluded += missing;
                m
            })
            .collect()
    } else {
        vec![None; n_groups]
    };

    let mut order: Vec<usize> = (0..n_groups).collect();
    order.sort_by(|&a, &b| delta[b].total_cmp(&delta[a]).then(a.cmp(&b)));

    let err_step: Vec<Option<f64>> = if options.stepwise {
        let nested: Vec<Design> = (1..n_groups)
            .map(|k| design.select_groups(&order[..k]))
            .collect();
        let per_rep = resample::map_reduce(
            &usable_reps,
            options.execution,
            |r| {
                let w = r.weights();
                Ok::<_, Infallible>(
                    nested
                        .iter()
                        .map(|d| reduced_error(d, r, &w))
                        .collect::<Vec<_>>(),
                )
            },
            |v| v,
        )
        .unwrap_or_else(|e| match e.source {});
        let mut steps: Vec<Option<f64>> = (0..nested.len())
            .map(|k| {
                let (m, missing) = mean_present(per_rep.iter().map(|r| r[k]));
                diagnostics.reduced_excluded += missing;
                m
            })
            .collect();
        // The last nested model is the full model on the same replicates.
        steps.push(Some(err_oob));
        steps
    } else {
        vec![None; n_groups]
    };

    let rows = order
        .iter()
        .enumerate()
        .map(|(rank, &gi)| {
            let g = &design.groups()[gi];
            let (beta_hat, p_value, beta_inbag) = match g.columns[..] {
                [col] => {
                    let w = regress::wald_row(&full, design, &g.name)?;
                    let inbag = usable.iter().map(|r| r.coefficients[col]).sum::<f64>() / b_used;
                    (Some(w.beta_hat), Some(w.p_value), Some(inbag))
                }
                _ => (None, None, None),
            };
            Ok(VimpRow {
                group: g.name.clone(),
                beta_hat,
                p_value,
                beta_inbag,
                delta: delta[gi],
                err_step: err_step[rank],
                delta_marginal: delta_marginal[gi],
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;

    Ok(VimpReport {
        family: design.family(),
        n: design.n_rows(),
        b_used: usable.len(),
        err_oob,
        rows,
        diagnostics,
    })
}
