//! Prediction-error functionals, all in percentage points (0–100).

use thiserror::Error;

use crate::dataset::SurvivalOutcome;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions, {1} outcomes")]
    LengthMismatch(usize, usize),
    #[error("no permissible pairs; concordance is undefined")]
    NoPermissiblePairs,
    #[error("response is constant; standardized error is undefined")]
    ConstantResponse,
    #[error("need at least {0} rows")]
    TooFewRows(usize),
}

/// Concordant and permissible pair counts, kept as integers so the final
/// ratio does not depend on summation order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairCounts {
    pub concordant: u64,
    pub tied_scores: u64,
    pub permissible: u64,
}

impl PairCounts {
    /// Harrell's C: concordant pairs plus half of the tied-score pairs.
    pub fn c_index(&self) -> f64 {
        (2 * self.concordant + self.tied_scores) as f64 / (2 * self.permissible) as f64
    }
}

/// Fenwick tree over score ranks.
struct RankCounter {
    tree: Vec<u64>,
}

impl RankCounter {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![0; n + 1],
        }
    }

    fn insert(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `rank`.
    fn count_below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Counts Harrell pairs in `O(n log n)`.
///
/// A pair (i, j) is permissible when i has an event and either
/// `time_i < time_j`, or the times are equal and j is censored. It is
/// concordant when `score_i > score_j` (higher risk fails first).
pub fn concordance_counts(
    scores: &[f64],
    outcome: &[SurvivalOutcome],
) -> Result<PairCounts, MetricError> {
    if scores.len() != outcome.len() {
        return Err(MetricError::LengthMismatch(scores.len(), outcome.len()));
    }
    let n = scores.len();

    // dense ranks of the scores; equal scores share a rank
    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for k in 0..n {
        if k > 0 && scores[by_score[k]] != scores[by_score[k - 1]] {
            r += 1;
        }
        rank[by_score[k]] = r;
    }

    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| outcome[b].time.total_cmp(&outcome[a].time));

    // Sweep times from longest to shortest. The counter holds every row
    // with a strictly later time, plus censored rows tied at the current time.
    let mut later = RankCounter::new(r + 1);
    let mut n_later = 0u64;
    let mut counts = PairCounts::default();
    let mut start = 0;
    while start < n {
        let t = outcome[by_time[start]].time;
        let end = (start..n)
            .find(|&k| outcome[by_time[k]].time != t)
            .unwrap_or(n);
        let run = &by_time[start..end];
        for &i in run.iter().filter(|&&i| !outcome[i].event) {
            later.insert(rank[i]);
            n_later += 1;
        }
        for &i in run.iter().filter(|&&i| outcome[i].event) {
            let below = later.count_below(rank[i]);
            let at_or_below = later.count_below(rank[i] + 1);
            counts.concordant += below;
            counts.tied_scores += at_or_below - below;
            counts.permissible += n_later;
        }
        for &i in run.iter().filter(|&&i| outcome[i].event) {
            later.insert(rank[i]);
            n_later += 1;
        }
        start = end;
    }
    Ok(counts)
}

/// `100 (1 - C)` with Harrell's C.
pub fn concordance_error(scores: &[f64], outcome: &[SurvivalOutcome]) -> Result<f64, MetricError> {
    let counts = concordance_counts(scores, outcome)?;
    if counts.permissible == 0 {
        return Err(MetricError::NoPermissiblePairs);
    }
    Ok(100.0 * (1.0 - counts.c_index()))
}

/// `100 · mean((y − pred)²) / Var(y)`, variance with denominator n.
pub fn standardized_mse_error(pred: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if pred.len() != y.len() {
        return Err(MetricError::LengthMismatch(pred.len(), y.len()));
    }
    if y.len() < 2 {
        return Err(MetricError::TooFewRows(2));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(MetricError::ConstantResponse);
    }
    let mse = pred
        .iter()
        .zip(y)
        .map(|(p, v)| (v - p).powi(2))
        .sum::<f64>()
        / n;
    Ok(100.0 * mse / var)
}

/// Percentage of rows where `prob > 0.5` disagrees with the 0/1 label.
/// A probability of exactly 0.5 predicts 0.
pub fn misclassification_error(probs: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    if probs.len() != labels.len() {
        return Err(MetricError::LengthMismatch(probs.len(), labels.len()));
    }
    if probs.is_empty() {
        return Err(MetricError::TooFewRows(1));
    }
    let wrong = probs
        .iter()
        .zip(labels)
        .filter(|(p, l)| (**p > 0.5) != (**l == 1.0))
        .count();
    Ok(100.0 * wrong as f64 / probs.len() as f64)
}
