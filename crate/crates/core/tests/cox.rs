mod common;

use common::{cox_dataset, cox_loglik, grid_argmax, ph_sample};
use convsurv::cox::{fit_cox, partial_likelihood, predict_cox_median, predict_cox_survival, CoxOptions};
use convsurv::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn no_ridge() -> CoxOptions {
    CoxOptions {
        ridge: 0.0,
        ..CoxOptions::default()
    }
}

fn small_rows(seed: u64, n: usize) -> Vec<(f64, bool, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = f64::from(rng.random_range(1..6u32));
            let e = rng.random::<f64>() < 0.7;
            (t, e, vec![rng.random_range(-2.0..2.0)])
        })
        .collect()
}

#[test]
fn matches_grid_search_on_small_datasets() {
    let mut checked = 0;
    for seed in 0..200 {
        let rows = small_rows(seed, 4 + (seed as usize % 7));
        let best = grid_argmax(|b| cox_loglik(&rows, &[b]), -8.0, 8.0);
        // Boundary optimum means the likelihood is monotone on this sample.
        if best.abs() > 7.9 || !rows.iter().any(|r| r.1) {
            continue;
        }
        let fit = fit_cox(&cox_dataset(&rows), &no_ridge()).unwrap();
        assert!((fit.beta[0] - best).abs() < 1e-3, "seed {seed}: {} vs {best}", fit.beta[0]);
        checked += 1;
    }
    assert!(checked > 100, "only {checked} datasets had an interior optimum");
}

#[test]
fn objective_matches_definition_and_finite_differences() {
    let rows = ph_sample(60, &[0.5, -0.3, 0.2], 11);
    let d = cox_dataset(&rows);
    let beta = [0.2, -0.1, 0.4];
    let obj = partial_likelihood(&d, &beta, 0.0).unwrap();
    assert!((obj.value - cox_loglik(&rows, &beta)).abs() < 1e-9);
    let h = 1e-5;
    for j in 0..3 {
        let shifted = |s: f64| {
            let mut b = beta;
            b[j] += s;
            partial_likelihood(&d, &b, 0.0).unwrap()
        };
        let (up, down) = (shifted(h), shifted(-h));
        let g = (up.value - down.value) / (2.0 * h);
        assert!((g - obj.gradient[j]).abs() <= 1e-6 * obj.gradient[j].abs().max(1.0));
        for k in 0..3 {
            let hk = (up.gradient[k] - down.gradient[k]) / (2.0 * h);
            assert!((hk - obj.hessian[j][k]).abs() <= 1e-6 * obj.hessian[j][k].abs().max(1.0));
        }
    }
}

#[test]
fn recovers_coefficients() {
    let truth = [0.7, -0.5];
    let fit = fit_cox(&cox_dataset(&ph_sample(2000, &truth, 7)), &CoxOptions::default()).unwrap();
    for (b, t) in fit.beta.iter().zip(truth) {
        assert!((b - t).abs() < 0.1, "{:?}", fit.beta);
    }
}

#[test]
fn separation_is_reported() {
    let rows: Vec<_> = (0..10)
        .map(|i| (f64::from(i + 1), true, vec![-f64::from(i)]))
        .collect();
    let err = fit_cox(&cox_dataset(&rows), &no_ridge()).unwrap_err();
    assert!(matches!(err, Error::MonotoneLikelihood { .. }), "{err:?}");
    let ridged = CoxOptions {
        ridge: 1.0,
        ..CoxOptions::default()
    };
    assert!(fit_cox(&cox_dataset(&rows), &ridged).is_ok());
}

#[test]
fn no_events_is_degenerate() {
    let rows = vec![(1.0, false, vec![0.0]), (2.0, false, vec![1.0])];
    assert!(matches!(fit_cox(&cox_dataset(&rows), &CoxOptions::default()), Err(Error::DegenerateFit(_))));
}

#[test]
fn shape_mismatch_at_prediction() {
    let fit = fit_cox(&cox_dataset(&ph_sample(100, &[0.5], 3)), &CoxOptions::default()).unwrap();
    assert!(matches!(predict_cox_survival(&fit, &[1.0, 2.0]), Err(Error::Shape { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Shifting a covariate changes only the baseline; predictions stay put.
    #[test]
    fn translation_invariant(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let rows = ph_sample(80, &[0.6], seed);
        let moved: Vec<_> = rows.iter().map(|(t, e, x)| (*t, *e, vec![x[0] + shift])).collect();
        let a = fit_cox(&cox_dataset(&rows), &no_ridge()).unwrap();
        let b = fit_cox(&cox_dataset(&moved), &no_ridge()).unwrap();
        prop_assert!((a.beta[0] - b.beta[0]).abs() < 1e-6);
        let x = rows[0].2[0];
        let sa = predict_cox_survival(&a, &[x]).unwrap();
        let sb = predict_cox_survival(&b, &[x + shift]).unwrap();
        for &t in sa.knots() {
            prop_assert!((sa.evaluate(t) - sb.evaluate(t)).abs() < 1e-6);
        }
    }

    // Only the ordering of times enters the partial likelihood.
    #[test]
    fn rank_invariant(seed in 0u64..1000) {
        let rows = ph_sample(80, &[0.6, -0.4], seed);
        let warped: Vec<_> = rows.iter().map(|(t, e, x)| (t.powi(3) + 2.0, *e, x.clone())).collect();
        let a = fit_cox(&cox_dataset(&rows), &no_ridge()).unwrap();
        let b = fit_cox(&cox_dataset(&warped), &no_ridge()).unwrap();
        for (x, y) in a.beta.iter().zip(&b.beta) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn higher_risk_never_survives_longer(seed in 0u64..1000, lo in -2.0f64..0.0, hi in 0.0f64..2.0) {
        let fit = fit_cox(&cox_dataset(&ph_sample(120, &[0.8], seed)), &CoxOptions::default()).unwrap();
        let (a, b) = if fit.beta[0] >= 0.0 { (lo, hi) } else { (hi, lo) };
        let s_low = predict_cox_survival(&fit, &[a]).unwrap();
        let s_high = predict_cox_survival(&fit, &[b]).unwrap();
        prop_assert!(s_low.is_valid_survival());
        for &t in s_low.knots() {
            prop_assert!(s_high.evaluate(t) <= s_low.evaluate(t) + 1e-12);
        }
        let (m_low, m_high) = (predict_cox_median(&fit, &[a]).unwrap(), predict_cox_median(&fit, &[b]).unwrap());
        if let Some(ml) = m_low {
            prop_assert!(m_high.is_some_and(|mh| mh <= ml));
        }
    }
}
