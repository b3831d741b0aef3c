//! B-spline basis expansion of a single variable.
//!
//! The basis is built on the clamped knot vector
//! `[lo; degree+1] ++ interior ++ [hi; degree+1]` with boundary knots at the
//! data range, which holds `interior.len() + degree + 1` functions forming a
//! partition of unity on `[lo, hi]`. The expansion emitted into a design
//! drops the first of them (the `splines::bs` convention), leaving
//! `interior.len() + degree` columns that stay identifiable next to an
//! intercept or inside a Cox model.
//!
//! Evaluation is right-continuous except at `hi`, which belongs to the last
//! non-empty knot span. Points outside `[lo, hi]` are rejected.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::regress::Design;

pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_DF: usize = 5;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SplineError {
    #[error("degree must be at least 1")]
    ZeroDegree,
    #[error("need at least {needed} distinct values, found {found}")]
    TooFewDistinct { needed: usize, found: usize },
    #[error("interior knot {0} is not strictly inside the data range [{1}, {2}]")]
    KnotOutsideRange(f64, f64, f64),
    #[error("interior knots must be strictly increasing")]
    KnotsNotIncreasing,
    #[error("degrees of freedom {df} is below the degree {degree}")]
    DfBelowDegree { df: usize, degree: usize },
    #[error("value {0} lies outside the boundary knots [{1}, {2}]")]
    OutsideBoundary(f64, f64, f64),
    #[error("non-finite value")]
    NonFinite,
    #[error("variable '{0}' not found in the design")]
    UnknownVariable(String),
    #[error("variable '{0}' is already expanded")]
    AlreadyExpanded(String),
    #[error("bad spline syntax '{0}': expected var=df or var=degree:k1,k2,...")]
    Syntax(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum KnotPlacement {
    /// Interior knots at empirical quantiles so that the emitted basis has
    /// `df` columns (`df - degree` interior knots).
    Quantile {
        df: usize,
    },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpec {
    pub variable: String,
    pub degree: usize,
    pub knots: KnotPlacement,
}

impl SplineSpec {
    pub fn with_df(variable: impl Into<String>, df: usize) -> Self {
        Self {
            variable: variable.into(),
            degree: DEFAULT_DEGREE,
            knots: KnotPlacement::Quantile { df },
        }
    }

    pub fn with_knots(variable: impl Into<String>, degree: usize, knots: Vec<f64>) -> Self {
        Self {
            variable: variable.into(),
            degree,
            knots: KnotPlacement::Explicit(knots),
        }
    }
}

/// Parses `var`, `var=df` or `var=degree:k1,k2,...`.
impl FromStr for SplineSpec {
    type Err = SplineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SplineError::Syntax(s.to_string());
        let (var, rest) = match s.split_once('=') {
            Some((v, r)) => (v.trim(), Some(r.trim())),
            None => (s.trim(), None),
        };
        if var.is_empty() {
            return Err(bad());
        }
        match rest {
            None => Ok(Self::with_df(var, DEFAULT_DF)),
            Some(r) => match r.split_once(':') {
                None => Ok(Self::with_df(var, r.parse().map_err(|_| bad())?)),
                Some((deg, knots)) => {
                    let degree = deg.trim().parse().map_err(|_| bad())?;
                    let knots = knots
                        .split(',')
                        .map(str::trim)
                        .filter(|k| !k.is_empty())
                        .map(|k| k.parse::<f64>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(Self::with_knots(var, degree, knots))
                }
            },
        }
    }
}

impl fmt::Display for SplineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.knots {
            KnotPlacement::Quantile { df } => write!(f, "{}={df}", self.variable),
            KnotPlacement::Explicit(k) => {
                let k: Vec<String> = k.iter().map(f64::to_string).collect();
                write!(f, "{}={}:{}", self.variable, self.degree, k.join(","))
            }
        }
    }
}

/// Clamped B-spline basis on fixed boundary and interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    degree: usize,
    interior: Vec<f64>,
    lo: f64,
    hi: f64,
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(degree: usize, interior: Vec<f64>, lo: f64, hi: f64) -> Result<Self, SplineError> {
        if degree == 0 {
            return Err(SplineError::ZeroDegree);
        }
        if !(lo.is_finite() && hi.is_finite()) || interior.iter().any(|k| !k.is_finite()) {
            return Err(SplineError::NonFinite);
        }
        for &k in &interior {
            if !(k > lo && k < hi) {
                return Err(SplineError::KnotOutsideRange(k, lo, hi));
            }
        }
        if interior.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SplineError::KnotsNotIncreasing);
        }
        let mut knots = vec![lo; degree + 1];
        knots.extend_from_slice(&interior);
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self {
            degree,
            interior,
            lo,
            hi,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Size of the full basis, `interior + degree + 1`.
    pub fn n_full(&self) -> usize {
        self.interior.len() + self.degree + 1
    }

    /// Index `mu` with `knots[mu] <= x < knots[mu + 1]`; `hi` maps to the last
    /// non-empty span.
    fn span(&self, x: f64) -> usize {
        let p = self.degree;
        let last = self.knots.len() - p - 2;
        if x >= self.hi {
            return last;
        }
        // knots[p..=last+1] is sorted; find the last knot <= x
        let mut mu = p + self.knots[p..=last + 1].partition_point(|&k| k <= x) - 1;
        mu = mu.clamp(p, last);
        mu
    }

    /// All `n_full()` basis functions at `x` (Cox–de Boor triangle).
    pub fn eval_full(&self, x: f64) -> Result<Vec<f64>, SplineError> {
        if !x.is_finite() {
            return Err(SplineError::NonFinite);
        }
        if x < self.lo || x > self.hi {
            return Err(SplineError::OutsideBoundary(x, self.lo, self.hi));
        }
        let p = self.degree;
        let t = &self.knots;
        let mu = self.span(x);
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        let mut out = vec![0.0; self.n_full()];
        out[mu - p..=mu].copy_from_slice(&n);
        Ok(out)
    }

    /// The emitted columns at `x`: the full basis without its first function.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>, SplineError> {
        let mut full = self.eval_full(x)?;
        full.remove(0);
        Ok(full)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    /// One vector per emitted basis function.
    pub columns: Vec<Vec<f64>>,
    /// `<var>_bs1 .. <var>_bsk`
    pub column_names: Vec<String>,
    pub boundary_knots: (f64, f64),
    pub basis: SplineBasis,
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman–Fan type 7).
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn quantile_knots(sorted: &[f64], n_interior: usize) -> Vec<f64> {
    (1..=n_interior)
        .map(|k| quantile(sorted, k as f64 / (n_interior + 1) as f64))
        .collect()
}

/// Expands `values` into the B-spline basis described by `spec`, with
/// boundary knots at the range of `values`.
pub fn bspline_basis(values: &[f64], spec: &SplineSpec) -> Result<BasisMatrix, SplineError> {
    if spec.degree == 0 {
        return Err(SplineError::ZeroDegree);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SplineError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < spec.degree + 1 {
        return Err(SplineError::TooFewDistinct {
            needed: spec.degree + 1,
            found: distinct.len(),
        });
    }
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let interior = match &spec.knots {
        KnotPlacement::Explicit(k) => k.clone(),
        KnotPlacement::Quantile { df } => {
            if *df < spec.degree {
                return Err(SplineError::DfBelowDegree {
                    df: *df,
                    degree: spec.degree,
                });
            }
            quantile_knots(&sorted, df - spec.degree)
        }
    };
    let basis = SplineBasis::new(spec.degree, interior, lo, hi)?;
    let k = basis.n_full() - 1;
    let mut columns = vec![Vec::with_capacity(values.len()); k];
    for &x in values {
        for (col, v) in columns.iter_mut().zip(basis.eval(x)?) {
            col.push(v);
        }
    }
    Ok(BasisMatrix {
        columns,
        column_names: (1..=k)
            .map(|j| format!("{}_bs{j}", spec.variable))
            .collect(),
        boundary_knots: (lo, hi),
        basis,
    })
}

/// Replaces a single-column variable of `design` by its B-spline columns,
/// all owned by one group carrying the variable's name, so that noising and
/// removal treat them jointly.
///
/// Knots come from the design's own rows; expand on the full data before
/// bootstrapping so inbag and out-of-bag rows share one basis.
pub fn expand_variable(design: &Design, spec: &SplineSpec) -> Result<Design, SplineError> {
    let gi = design
        .group_index(&spec.variable)
        .ok_or_else(|| SplineError::UnknownVariable(spec.variable.clone()))?;
    let group = &design.groups()[gi];
    if group.expanded || group.columns.len() != 1 {
        return Err(SplineError::AlreadyExpanded(spec.variable.clone()));
    }
    let values = design.column(group.columns[0]);
    let basis = bspline_basis(&values, spec)?;
    let columns = basis.column_names.into_iter().zip(basis.columns).collect();
    Ok(design
        .replace_group(gi, columns)
        .expect("basis columns keep the design valid"))
}
