use oob_vimp::dataset::SurvivalOutcome;
use oob_vimp::regress::{self, partial_likelihood, Design, Family, FittedModel, Response};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Rows {
    x: Vec<[f64; 2]>,
    y: Vec<f64>,
    time: Vec<u8>,
    event: Vec<bool>,
    weight: Vec<u32>,
}

fn rows() -> impl Strategy<Value = Rows> {
    (12usize..40).prop_flat_map(|n| {
        (
            proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n),
            proptest::collection::vec(-3.0f64..3.0, n),
            proptest::collection::vec(1u8..12, n),
            proptest::collection::vec(proptest::bool::weighted(0.6), n),
            proptest::collection::vec(0u32..4, n),
        )
            .prop_map(|(x, y, time, event, weight)| Rows {
                x: x.into_iter().map(|(a, b)| [a, b]).collect(),
                y,
                time,
                event,
                weight,
            })
    })
}

fn design(r: &Rows, family: Family, order: &[usize]) -> Design {
    let col = |j: usize| order.iter().map(|&i| r.x[i][j]).collect::<Vec<f64>>();
    let response = match family {
        Family::Linear => Response::Continuous(order.iter().map(|&i| r.y[i] + r.x[i][0]).collect()),
        Family::Logistic => Response::Binary(
            order
                .iter()
                .map(|&i| f64::from(u8::from(r.y[i] + r.x[i][0] > 0.0)))
                .collect(),
        ),
        Family::Cox => Response::Survival(
            order
                .iter()
                .map(|&i| SurvivalOutcome::new(f64::from(r.time[i]), r.event[i]))
                .collect(),
        ),
    };
    Design::new(
        vec![("a".into(), col(0)), ("b".into(), col(1))],
        None,
        family,
        response,
    )
    .unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

fn usable(m: &Result<FittedModel, regress::FitError>) -> Option<&FittedModel> {
    m.as_ref().ok().filter(|m| m.converged)
}

const FAMILIES: [Family; 3] = [Family::Linear, Family::Logistic, Family::Cox];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_act_like_replicated_rows(r in rows()) {
        let n = r.x.len();
        let all: Vec<usize> = (0..n).collect();
        let expanded: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, r.weight[i] as usize)).collect();
        prop_assume!(expanded.len() >= 6);
        for family in FAMILIES {
            let weighted = regress::fit(&design(&r, family, &all), &r.weight.iter().map(|&w| f64::from(w)).collect::<Vec<_>>());
            let copied = Design::new(
                vec![
                    ("a".into(), expanded.iter().map(|&i| r.x[i][0]).collect()),
                    ("b".into(), expanded.iter().map(|&i| r.x[i][1]).collect()),
                ],
                None,
                family,
                design(&r, family, &all).response().select(&expanded),
            );
            let Ok(copied) = copied else { continue };
            let unit = regress::fit(&copied, &vec![1.0; expanded.len()]);
            if let (Some(w), Some(u)) = (usable(&weighted), usable(&unit)) {
                prop_assert!(close(&w.coefficients, &u.coefficients, 1e-6), "{family:?} {:?} {:?}", w.coefficients, u.coefficients);
                prop_assert!((w.log_likelihood - u.log_likelihood).abs() <= 1e-6 * (1.0 + u.log_likelihood.abs()));
            }
        }
    }

    #[test]
    fn row_order_does_not_matter(r in rows(), shift in 1usize..11) {
        let n = r.x.len();
        let all: Vec<usize> = (0..n).collect();
        let rotated: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
        let mut seen = rotated.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assume!(seen.len() == n);
        for family in FAMILIES {
            let a = regress::fit(&design(&r, family, &all), &vec![1.0; n]);
            let b = regress::fit(&design(&r, family, &rotated), &vec![1.0; n]);
            if let (Some(a), Some(b)) = (usable(&a), usable(&b)) {
                // both fits stop on the log-likelihood change, so they agree to solver precision
                prop_assert!(close(&a.coefficients, &b.coefficients, 1e-6), "{family:?} {:?} {:?}", a.coefficients, b.coefficients);
            }
        }
    }

    #[test]
    fn newton_never_decreases_the_likelihood(r in rows()) {
        let n = r.x.len();
        let all: Vec<usize> = (0..n).collect();
        for family in FAMILIES {
            if let Ok(m) = regress::fit(&design(&r, family, &all), &vec![1.0; n]) {
                for w in m.log_likelihood_trace.windows(2) {
                    prop_assert!(w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()), "{family:?} {:?}", m.log_likelihood_trace);
                }
            }
        }
    }

    #[test]
    fn cox_score_matches_finite_differences(r in rows(), b0 in -1.0f64..1.0, b1 in -1.0f64..1.0) {
        let n = r.x.len();
        prop_assume!(r.event.iter().any(|&e| e));
        let d = design(&r, Family::Cox, &(0..n).collect::<Vec<_>>());
        let w: Vec<f64> = r.weight.iter().map(|&w| f64::from(w) + 0.5).collect();
        let beta = [b0, b1];
        let obj = partial_likelihood(&d, &w, &beta);
        let h = 1e-6;
        for j in 0..2 {
            let mut up = beta;
            let mut down = beta;
            up[j] += h;
            down[j] -= h;
            let fd = (partial_likelihood(&d, &w, &up).log_likelihood - partial_likelihood(&d, &w, &down).log_likelihood) / (2.0 * h);
            prop_assert!((fd - obj.score[j]).abs() <= 1e-5 * obj.score[j].abs().max(1.0));
            // information is minus the Hessian
            let fd2 = -(partial_likelihood(&d, &w, &up).score[j] - partial_likelihood(&d, &w, &down).score[j]) / (2.0 * h);
            prop_assert!((fd2 - obj.information.get(j, j)).abs() <= 1e-5 * fd2.abs().max(1.0));
        }
    }
}

#[test]
fn cox_fit_matches_a_grid_search() {
    // single covariate, ties in time, one censored row
    let x = vec![0.3, -1.2, 0.8, 1.5, -0.4, 0.0, 2.1, -0.9];
    let out = [
        (1.0, true),
        (2.0, true),
        (2.0, true),
        (3.0, false),
        (4.0, true),
        (4.0, false),
        (5.0, true),
        (6.0, true),
    ];
    let d = Design::new(
        vec![("x".into(), x)],
        None,
        Family::Cox,
        Response::Survival(
            out.iter()
                .map(|&(t, e)| SurvivalOutcome::new(t, e))
                .collect(),
        ),
    )
    .unwrap();
    let w = vec![1.0; 8];
    let m = regress::fit(&d, &w).unwrap();
    assert!(m.converged);
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
    for k in -40_000..=40_000 {
        let b = f64::from(k) * 1e-4;
        let ll = partial_likelihood(&d, &w, &[b]).log_likelihood;
        if ll > best {
            best = ll;
            arg = b;
        }
    }
    assert!(
        (m.coefficients[0] - arg).abs() < 1e-3,
        "{} vs {arg}",
        m.coefficients[0]
    );
    assert!(m.log_likelihood >= best - 1e-12);
}

#[test]
fn null_cox_model_is_the_plain_risk_set_likelihood() {
    let out = [(1.0, true), (2.0, false), (3.0, true), (3.0, true)];
    let d = Design::new(
        vec![],
        None,
        Family::Cox,
        Response::Survival(
            out.iter()
                .map(|&(t, e)| SurvivalOutcome::new(t, e))
                .collect(),
        ),
    )
    .unwrap();
    let m = regress::fit(&d, &[1.0; 4]).unwrap();
    assert!(m.converged);
    assert!(m.coefficients.is_empty());
    // Breslow: -ln 4 at t=1, then two tied events with a risk set of 2
    let expected = -(4.0f64).ln() - 2.0 * (2.0f64).ln();
    assert!((m.log_likelihood - expected).abs() < 1e-12);
}

#[test]
fn zeroing_a_coefficient_equals_zeroing_its_column() {
    let r = Rows {
        x: (0..20)
            .map(|i| [(i as f64 * 0.7).sin(), (i as f64 * 1.9).cos()])
            .collect(),
        y: (0..20).map(|i| (i as f64 * 2.3).sin()).collect(),
        time: (0..20).map(|i| (i % 7 + 1) as u8).collect(),
        event: (0..20).map(|i| i % 3 != 0).collect(),
        weight: vec![1; 20],
    };
    let all: Vec<usize> = (0..20).collect();
    for family in FAMILIES {
        let d = design(&r, family, &all);
        let m = regress::fit(&d, &[1.0; 20]).unwrap();
        for gi in 0..2 {
            let by_coef = regress::linear_predictor(&m.with_zeroed(&[gi]), &d).unwrap();
            let by_col = regress::linear_predictor(&m, &d.with_zeroed_group(gi)).unwrap();
            assert_eq!(by_coef, by_col, "{family:?}");
        }
    }
}
