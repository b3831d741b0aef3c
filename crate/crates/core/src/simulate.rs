//! Misspecified Cox simulation, the Monte Carlo driver that averages VIMP
//! analyses over fresh datasets, and the subsample robustness experiment.
//!
//! Event times follow a proportional-hazards model with an exponential
//! baseline,
//!
//! ```text
//! log h(t | x) = α0 + 0.05 psa + 0.01 tv + ψ(tv),   ψ(tv) = 0.04 tv² − 0.005 tv³
//! ```
//!
//! plus three standard normal noise covariates with no effect. `α0` puts the
//! marginal median event time at 1, and censoring times are exponential with
//! a rate chosen so the expected censored fraction hits the target. Both
//! constants are solved on a fixed pilot sample of covariates, so they are the
//! same for every simulated dataset with the same parameters.

use rand::seq::index;
use rand::{RngExt, SeedableRng};
use rand_distr::{Exp1, StandardNormal};
use rand_pcg::Pcg64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{ColumnKind, ColumnRole, ColumnSpec, DataError, Dataset};
use crate::regress::{Design, DesignError, Family, Response};
use crate::resample::{mix_seed, Execution};
use crate::spline::{self, SplineError, SplineSpec};
use crate::vimp::{self, VimpError, VimpOptions, VimpReport};

pub const PSA: &str = "psa";
pub const TUMOR: &str = "tumor_volume";
pub const NOISE: [&str; 3] = ["X1", "X2", "X3"];
pub const TIME: &str = "time";
pub const EVENT: &str = "event";

const PILOT_SIZE: usize = 100_000;
const PILOT_SEED: u64 = 0x5EED_0FC0_FFEE;
const BISECTION_STEPS: usize = 200;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: VimpError,
    },
    #[error("fraction {fraction} gives {rows} rows; at least 10 are needed")]
    SubsampleTooSmall { fraction: f64, rows: usize },
    #[error("fraction {fraction}, repeat {repeat}: no events after 10 draws")]
    NoEvents { fraction: f64, repeat: usize },
}

/// Distribution of a simulated covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "law")]
pub enum CovariateLaw {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// `exp(mu + sigma Z)` with `Z` standard normal.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Exponential {
        mean: f64,
    },
}

impl CovariateLaw {
    fn is_valid(&self) -> bool {
        match *self {
            CovariateLaw::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            CovariateLaw::LogNormal { mu, sigma } => {
                mu.is_finite() && sigma.is_finite() && sigma > 0.0
            }
            CovariateLaw::Exponential { mean } => mean.is_finite() && mean > 0.0,
        }
    }

    fn draw(&self, rng: &mut Pcg64) -> f64 {
        match *self {
            CovariateLaw::Uniform { lo, hi } => rng.random_range(lo..hi),
            CovariateLaw::LogNormal { mu, sigma } => {
                (mu + sigma * rng.sample::<f64, _>(StandardNormal)).exp()
            }
            CovariateLaw::Exponential { mean } => mean * rng.sample::<f64, _>(Exp1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoxSimParams {
    pub n: usize,
    pub beta_psa: f64,
    pub beta_tumor_linear: f64,
    pub psi_quadratic: f64,
    pub psi_cubic: f64,
    pub target_censoring: f64,
    pub psa: CovariateLaw,
    pub tumor_volume: CovariateLaw,
}

impl Default for CoxSimParams {
    fn default() -> Self {
        Self {
            n: 1000,
            beta_psa: 0.05,
            beta_tumor_linear: 0.01,
            psi_quadratic: 0.04,
            psi_cubic: -0.005,
            target_censoring: 0.70,
            psa: CovariateLaw::Exponential { mean: 6.75 },
            tumor_volume: CovariateLaw::Uniform { lo: 0.0, hi: 10.0 },
        }
    }
}

impl CoxSimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Params(m.to_string()));
        if self.n < 10 {
            return bad("n must be at least 10");
        }
        if !(self.target_censoring > 0.0 && self.target_censoring < 1.0) {
            return bad("target censoring must lie in (0, 1)");
        }
        if !(self.psa.is_valid() && self.tumor_volume.is_valid()) {
            return bad("invalid covariate distribution");
        }
        let coefs = [
            self.beta_psa,
            self.beta_tumor_linear,
            self.psi_quadratic,
            self.psi_cubic,
        ];
        if coefs.iter().any(|c| !c.is_finite()) {
            return bad("coefficients must be finite");
        }
        Ok(())
    }

    /// The non-linear part of the tumor effect.
    pub fn psi(&self, tv: f64) -> f64 {
        self.psi_quadratic * tv * tv + self.psi_cubic * tv * tv * tv
    }

    /// Log relative hazard without the baseline.
    pub fn log_relative_hazard(&self, psa: f64, tv: f64) -> f64 {
        self.beta_psa * psa + self.beta_tumor_linear * tv + self.psi(tv)
    }

    fn draw_hazard_covariates(&self, rng: &mut Pcg64) -> (f64, f64) {
        (self.psa.draw(rng), self.tumor_volume.draw(rng))
    }
}

/// Baseline log-hazard and censoring rate solved for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub alpha0: f64,
    pub censoring_rate: f64,
}

fn bisect(mut lo: f64, mut hi: f64, increasing: bool, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `α0` (marginal median event time 1) and the exponential censoring
/// rate `λ` with `E[λ / (λ + h(x))] = target` on the pilot sample.
pub fn calibrate(params: &CoxSimParams) -> Result<Calibration, SimError> {
    params.validate()?;
    let mut rng = Pcg64::seed_from_u64(PILOT_SEED);
    let lp: Vec<f64> = (0..PILOT_SIZE)
        .map(|_| {
            let (psa, tv) = params.draw_hazard_covariates(&mut rng);
            params.log_relative_hazard(psa, tv)
        })
        .collect();
    let mean = |f: &dyn Fn(f64) -> f64| lp.iter().map(|&v| f(v)).sum::<f64>() / lp.len() as f64;
    // S(1) = E[exp(-exp(α0 + lp))] decreases in α0
    let alpha0 = bisect(-60.0, 60.0, false, |a| {
        mean(&|v| (-(a + v).exp()).exp()) - 0.5
    });
    // censored fraction increases in log λ
    let log_rate = bisect(-60.0, 60.0, true, |lr| {
        let rate = lr.exp();
        mean(&|v| rate / (rate + (alpha0 + v).exp())) - params.target_censoring
    });
    Ok(Calibration {
        alpha0,
        censoring_rate: log_rate.exp(),
    })
}

/// Simulates one dataset with columns psa, tumor_volume, X1, X2, X3, time
/// and event.
pub fn simulate_cox_data(params: &CoxSimParams, seed: u64) -> Result<Dataset, SimError> {
    let cal = calibrate(params)?;
    simulate_calibrated(params, &cal, seed)
}

/// As [`simulate_cox_data`] with a precomputed calibration.
pub fn simulate_calibrated(
    params: &CoxSimParams,
    cal: &Calibration,
    seed: u64,
) -> Result<Dataset, SimError> {
    params.validate()?;
    let n = params.n;
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = (0..7).map(|_| Vec::with_capacity(n)).collect();
    for _ in 0..n {
        let (psa, tv) = params.draw_hazard_covariates(&mut rng);
        cols[0].push(psa);
        cols[1].push(tv);
        for c in &mut cols[2..5] {
            c.push(rng.sample(StandardNormal));
        }
        let hazard = (cal.alpha0 + params.log_relative_hazard(psa, tv)).exp();
        let event_time = rng.sample::<f64, _>(Exp1) / hazard;
        let censor_time = rng.sample::<f64, _>(Exp1) / cal.censoring_rate;
        cols[5].push(event_time.min(censor_time));
        cols[6].push(f64::from(event_time <= censor_time));
    }
    let mut specs = vec![ColumnSpec::covariate(PSA), ColumnSpec::covariate(TUMOR)];
    specs.extend(NOISE.iter().map(|v| ColumnSpec::covariate(*v)));
    specs.push(ColumnSpec::new(TIME, ColumnKind::Numeric, ColumnRole::Time));
    specs.push(ColumnSpec::new(
        EVENT,
        ColumnKind::Binary,
        ColumnRole::Event,
    ));
    Ok(Dataset::new(specs.into_iter().zip(cols).collect())?)
}

/// How tumor volume enters the analysis model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ModelVariant {
    /// Linear in every covariate (misspecified for tumor volume).
    Linear,
    /// Tumor volume replaced by a cubic B-spline with `df` columns.
    Spline { df: usize },
}

/// Cox design of a simulated dataset under `variant`.
pub fn analysis_design(data: &Dataset, variant: ModelVariant) -> Result<Design, SimError> {
    let design = Design::from_dataset(data, Family::Cox)?;
    Ok(match variant {
        ModelVariant::Linear => design,
        ModelVariant::Spline { df } => {
            spline::expand_variable(&design, &SplineSpec::with_df(TUMOR, df))?
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableSummary {
    pub group: String,
    pub beta_hat: Option<f64>,
    pub p_value: Option<f64>,
    pub beta_inbag: Option<f64>,
    pub delta: f64,
    pub delta_marginal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub m: usize,
    pub variant: ModelVariant,
    pub bootstrap: usize,
    pub calibration: Calibration,
    pub err_oob: f64,
    pub event_fraction: f64,
    /// Variables in data column order.
    pub variables: Vec<VariableSummary>,
}

impl MonteCarloSummary {
    pub fn variable(&self, group: &str) -> Option<&VariableSummary> {
        self.variables.iter().find(|v| v.group == group)
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v?;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Repeats simulate → analyze `m` times and averages the reports. Run `r`
/// (1-based) simulates with `mix_seed(master_seed, r)` and bootstraps with
/// `mix_seed` of that seed, so runs are independent of scheduling.
pub fn monte_carlo(
    params: &CoxSimParams,
    m: usize,
    variant: ModelVariant,
    options: &VimpOptions,
    master_seed: u64,
) -> Result<MonteCarloSummary, SimError> {
    if m == 0 {
        return Err(SimError::Params("need at least one Monte Carlo run".into()));
    }
    let cal = calibrate(params)?;
    let run = |r: usize| -> Result<(VimpReport, f64), SimError> {
        let data_seed = mix_seed(master_seed, r as u64);
        let data = simulate_calibrated(params, &cal, data_seed)?;
        let events = data.column(EVENT)?.iter().sum::<f64>() / params.n as f64;
        let design = analysis_design(&data, variant)?;
        let opts = VimpOptions {
            seed: mix_seed(data_seed, 0),
            stepwise: false,
            ..options.clone()
        };
        let report = vimp::vimp_analysis(&design, &opts)
            .map_err(|source| SimError::Run { run: r, source })?;
        Ok((report, events))
    };
    let runs: Vec<Result<(VimpReport, f64), SimError>> = match options.execution {
        Execution::Serial => (1..=m).map(run).collect(),
        Execution::Parallel => (1..=m).into_par_iter().map(run).collect(),
    };
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mf = m as f64;
    let mut names: Vec<&str> = vec![PSA, TUMOR];
    names.extend(NOISE);
    let variables = names
        .iter()
        .map(|&name| {
            let rows: Vec<&vimp::VimpRow> = runs
                .iter()
                .map(|(rep, _)| rep.row(name).expect("every run reports every variable"))
                .collect();
            VariableSummary {
                group: name.to_string(),
                beta_hat: mean_of(rows.iter().map(|r| r.beta_hat)),
                p_value: mean_of(rows.iter().map(|r| r.p_value)),
                beta_inbag: mean_of(rows.iter().map(|r| r.beta_inbag)),
                delta: rows.iter().map(|r| r.delta).sum::<f64>() / mf,
                delta_marginal: mean_of(rows.iter().map(|r| r.delta_marginal)),
            }
        })
        .collect();
    Ok(MonteCarloSummary {
        m,
        variant,
        bootstrap: options.bootstrap,
        calibration: cal,
        err_oob: runs.iter().map(|(r, _)| r.err_oob).sum::<f64>() / mf,
        event_fraction: runs.iter().map(|(_, e)| e).sum::<f64>() / mf,
        variables,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessOptions {
    pub fractions: Vec<f64>,
    pub repeats: usize,
    /// Bootstrap settings; every subsample is analyzed with `vimp.seed`.
    pub vimp: VimpOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRecord {
    pub fraction: f64,
    /// 1-based.
    pub repeat: usize,
    pub group: String,
    pub p_value: Option<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quartiles {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

impl Quartiles {
    fn of(mut values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        Some(Self {
            q25: spline::quantile(&values, 0.25),
            q50: spline::quantile(&values, 0.50),
            q75: spline::quantile(&values, 0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileRow {
    pub fraction: f64,
    pub group: String,
    pub runs: usize,
    /// Quartiles of ln p; absent for multi-column groups.
    pub log_p: Option<Quartiles>,
    pub delta: Quartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRun {
    pub fraction: f64,
    pub repeat: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessResult {
    pub records: Vec<RobustnessRecord>,
    pub quantiles: Vec<QuantileRow>,
    /// Subsamples whose analysis was degenerate, left out of the quantiles.
    pub skipped: Vec<SkippedRun>,
}

fn has_events(design: &Design) -> bool {
    match design.response() {
        Response::Survival(s) => s.iter().any(|o| o.event),
        _ => true,
    }
}

/// Analyzes repeated without-replacement subsamples at each fraction.
///
/// `ln p` is taken after flooring p at the smallest normal double so that a
/// p-value that underflows to 0 stays finite.
pub fn subsample_robustness(
    design: &Design,
    options: &RobustnessOptions,
) -> Result<RobustnessResult, SimError> {
    let n = design.n_rows();
    if options.repeats == 0 {
        return Err(SimError::Params("need at least one repeat".into()));
    }
    let mut sizes = Vec::with_capacity(options.fractions.len());
    for &f in &options.fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(SimError::Params(format!("fraction {f} is outside (0, 1]")));
        }
        let rows = (f * n as f64).round() as usize;
        if rows < 10 {
            return Err(SimError::SubsampleTooSmall { fraction: f, rows });
        }
        sizes.push(rows);
    }

    let tasks: Vec<(usize, usize)> = (0..options.fractions.len())
        .flat_map(|fi| (1..=options.repeats).map(move |r| (fi, r)))
        .collect();
    let run = |&(fi, repeat): &(usize, usize)| -> Result<Result<VimpReport, String>, SimError> {
        let fraction = options.fractions[fi];
        let stream = mix_seed(mix_seed(options.vimp.seed, fi as u64), repeat as u64);
        let mut rng = Pcg64::seed_from_u64(stream);
        for _ in 0..10 {
            let mut rows = index::sample(&mut rng, n, sizes[fi]).into_vec();
            rows.sort_unstable();
            let sub = design.select_rows(&rows)?;
            if has_events(&sub) {
                let opts = VimpOptions {
                    marginal: false,
                    stepwise: false,
                    ..options.vimp.clone()
                };
                return Ok(vimp::vimp_analysis(&sub, &opts).map_err(|e| e.to_string()));
            }
        }
        Err(SimError::NoEvents { fraction, repeat })
    };
    let outcomes: Vec<_> = match options.vimp.execution {
        Execution::Serial => tasks.iter().map(run).collect(),
        Execution::Parallel => tasks.par_iter().map(run).collect(),
    };

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (&(fi, repeat), outcome) in tasks.iter().zip(outcomes) {
        let fraction = options.fractions[fi];
        match outcome? {
            Ok(report) => {
                for g in design.groups() {
                    let row = report.row(&g.name).expect("subsample keeps every group");
                    records.push(RobustnessRecord {
                        fraction,
                        repeat,
                        group: g.name.clone(),
                        p_value: row.p_value,
                        delta: row.delta,
                    });
                }
            }
            Err(reason) => skipped.push(SkippedRun {
                fraction,
                repeat,
                reason,
            }),
        }
    }

    let mut quantiles = Vec::new();
    for &fraction in &options.fractions {
        for g in design.groups() {
            let recs: Vec<&RobustnessRecord> = records
                .iter()
                .filter(|r| r.fraction == fraction && r.group == g.name)
                .collect();
            let Some(delta) = Quartiles::of(recs.iter().map(|r| r.delta).collect()) else {
                continue;
            };
            let log_p: Vec<f64> = recs
                .iter()
                .filter_map(|r| r.p_value)
                .map(|p| p.max(f64::MIN_POSITIVE).ln())
                .collect();
            quantiles.push(QuantileRow {
                fraction,
                group: g.name.clone(),
                runs: recs.len(),
                log_p: Quartiles::of(log_p),
                delta,
            });
        }
    }
    Ok(RobustnessResult {
        records,
        quantiles,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::fit;

    #[test]
    fn psi_values() {
        let p = CoxSimParams::default();
        assert_eq!(p.psi(0.0), 0.0);
        assert!((p.psi(10.0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_hits_targets_on_the_pilot() {
        let p = CoxSimParams::default();
        let cal = calibrate(&p).unwrap();
        assert!(cal.censoring_rate > 0.0);
        let mut looser = p.clone();
        looser.target_censoring = 0.5;
        assert!(calibrate(&looser).unwrap().censoring_rate < cal.censoring_rate);
        assert_eq!(cal, calibrate(&p).unwrap());
    }

    #[test]
    fn invalid_params() {
        let bad = [
            CoxSimParams {
                target_censoring: 1.0,
                ..CoxSimParams::default()
            },
            CoxSimParams {
                n: 5,
                ..CoxSimParams::default()
            },
            CoxSimParams {
                psa: CovariateLaw::Uniform { lo: 3.0, hi: 3.0 },
                ..CoxSimParams::default()
            },
        ];
        for p in &bad {
            assert!(calibrate(p).is_err(), "{p:?}");
        }
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let p = CoxSimParams {
            n: 50,
            ..CoxSimParams::default()
        };
        let a = simulate_cox_data(&p, 3).unwrap();
        let names: Vec<&str> = a.columns().iter().map(|c| c.spec.name.as_str()).collect();
        assert_eq!(
            names,
            ["psa", "tumor_volume", "X1", "X2", "X3", "time", "event"]
        );
        assert_eq!(a, simulate_cox_data(&p, 3).unwrap());
        assert_ne!(a, simulate_cox_data(&p, 4).unwrap());
        assert!(a.column(TIME).unwrap().iter().all(|t| *t > 0.0));
    }

    #[test]
    fn spline_variant_reports_one_tumor_row() {
        let p = CoxSimParams {
            n: 50,
            ..CoxSimParams::default()
        };
        let data = simulate_cox_data(&p, 8).unwrap();
        let design = analysis_design(&data, ModelVariant::Spline { df: 5 }).unwrap();
        assert_eq!(design.n_cols(), 9);
        let r = vimp::vimp_analysis(
            &design,
            &VimpOptions {
                bootstrap: 10,
                ..VimpOptions::default()
            },
        )
        .unwrap();
        assert_eq!(r.rows.len(), 5);
        let tv = r.row(TUMOR).unwrap();
        assert!(tv.beta_hat.is_none() && tv.p_value.is_none());
    }

    #[test]
    fn single_run_monte_carlo_is_that_run() {
        let p = CoxSimParams {
            n: 120,
            ..CoxSimParams::default()
        };
        let o = VimpOptions {
            bootstrap: 8,
            ..VimpOptions::default()
        };
        let s = monte_carlo(&p, 1, ModelVariant::Linear, &o, 11).unwrap();
        let seed = mix_seed(11, 1);
        let data = simulate_cox_data(&p, seed).unwrap();
        let design = analysis_design(&data, ModelVariant::Linear).unwrap();
        let r = vimp::vimp_analysis(
            &design,
            &VimpOptions {
                seed: mix_seed(seed, 0),
                stepwise: false,
                ..o.clone()
            },
        )
        .unwrap();
        assert_eq!(s.err_oob, r.err_oob);
        assert_eq!(s.variable(PSA).unwrap().delta, r.row(PSA).unwrap().delta);
        assert!(matches!(
            monte_carlo(&p, 0, ModelVariant::Linear, &o, 11),
            Err(SimError::Params(_))
        ));
    }

    #[test]
    fn robustness_shapes() {
        let p = CoxSimParams {
            n: 200,
            ..CoxSimParams::default()
        };
        let design = Design::from_dataset(&simulate_cox_data(&p, 2).unwrap(), Family::Cox).unwrap();
        let opts = RobustnessOptions {
            fractions: vec![0.5],
            repeats: 2,
            vimp: VimpOptions {
                bootstrap: 5,
                ..VimpOptions::default()
            },
        };
        let r = subsample_robustness(&design, &opts).unwrap();
        assert_eq!(r.records.len() + 5 * r.skipped.len(), 2 * 5);
        assert_eq!(r.quantiles.len(), 5);
        let tiny = RobustnessOptions {
            fractions: vec![0.001],
            ..opts.clone()
        };
        assert!(matches!(
            subsample_robustness(&design, &tiny),
            Err(SimError::SubsampleTooSmall { .. })
        ));
    }

    #[test]
    fn full_fraction_reproduces_the_analysis() {
        let p = CoxSimParams {
            n: 100,
            ..CoxSimParams::default()
        };
        let design = Design::from_dataset(&simulate_cox_data(&p, 6).unwrap(), Family::Cox).unwrap();
        let vimp = VimpOptions {
            bootstrap: 6,
            seed: 4,
            marginal: false,
            stepwise: false,
            ..VimpOptions::default()
        };
        let r = subsample_robustness(
            &design,
            &RobustnessOptions {
                fractions: vec![1.0],
                repeats: 1,
                vimp: vimp.clone(),
            },
        )
        .unwrap();
        let full = vimp::vimp_analysis(&design, &vimp).unwrap();
        for rec in &r.records {
            assert_eq!(rec.delta, full.row(&rec.group).unwrap().delta);
        }
    }

    #[test]
    fn correctly_specified_fit_is_unbiased_on_a_small_sample() {
        // quick version of the large-sample recovery check in the integration tests
        let p = CoxSimParams {
            n: 3000,
            ..CoxSimParams::default()
        };
        let data = simulate_cox_data(&p, 21).unwrap();
        let tv = data.column(TUMOR).unwrap();
        let cols = vec![
            (PSA.to_string(), data.column(PSA).unwrap().to_vec()),
            ("tv".to_string(), tv.to_vec()),
            ("tv2".to_string(), tv.iter().map(|v| v * v).collect()),
            ("tv3".to_string(), tv.iter().map(|v| v * v * v).collect()),
        ];
        let design = Design::new(
            cols,
            None,
            Family::Cox,
            Design::from_dataset(&data, Family::Cox)
                .unwrap()
                .response()
                .clone(),
        )
        .unwrap();
        let m = fit(&design, &vec![1.0; p.n]).unwrap();
        let se = m.standard_errors();
        let truth = [0.05, 0.01, 0.04, -0.005];
        for j in 0..4 {
            assert!((m.coefficients[j] - truth[j]).abs() < 4.0 * se[j], "{j}");
        }
    }
}
