mod common;

use common::{cr_sample, dataset_from, noise_dataset, Obs};
use convsurv::estimators::{aalen_johansen, kaplan_meier, nelson_aalen};
use convsurv::forest::{
    fit_conditional_ensemble, fit_rsf, fit_rsf_competing, predict_forest_cumulative_hazard,
    predict_forest_incidence, predict_forest_median, predict_forest_survival, root_split_feature,
    Aggregation, ForestConfig, ForestKind, ForestModel,
};
use convsurv::{Error, EventStatus};
use proptest::prelude::*;

fn small(n_trees: usize, seed: u64) -> ForestConfig {
    ForestConfig {
        n_trees,
        min_node_events: 5,
        seed,
        ..ForestConfig::default()
    }
}

fn stump() -> ForestConfig {
    ForestConfig {
        n_trees: 3,
        bootstrap: false,
        max_depth: Some(0),
        min_node_events: 1,
        ..ForestConfig::default()
    }
}

fn grid() -> Vec<[f64; 2]> {
    let v = [0.05, 0.3, 0.5, 0.7, 0.95];
    v.iter().flat_map(|&a| v.iter().map(move |&b| [a, b])).collect()
}

#[test]
fn rsf_survival_is_exp_of_mean_tree_hazard() {
    let d = cr_sample(400, 1).to_single_risk();
    let m = fit_rsf(&d, &small(10, 3)).unwrap();
    for x in grid() {
        let s = predict_forest_survival(&m, &x).unwrap();
        let per_tree: Vec<_> = m.trees.iter().map(|t| t.leaf(&x).table.nelson_aalen()).collect();
        for &k in s.knots() {
            let mean = per_tree.iter().map(|h| h.evaluate(k)).sum::<f64>() / per_tree.len() as f64;
            assert!((-s.evaluate(k).ln() - mean).abs() <= 1e-9);
        }
    }
}

#[test]
fn competing_forest_curves_sum_to_one() {
    let d = cr_sample(400, 2);
    let m = fit_rsf_competing(&d, &small(20, 5)).unwrap();
    for x in grid() {
        let s = predict_forest_survival(&m, &x).unwrap();
        let c1 = predict_forest_incidence(&m, &x, EventStatus::Converted).unwrap();
        let c2 = predict_forest_incidence(&m, &x, EventStatus::Churned).unwrap();
        assert!(c1.is_valid_incidence() && c2.is_valid_incidence() && s.is_valid_survival());
        for &k in s.knots() {
            let total = s.evaluate(k) + c1.evaluate(k) + c2.evaluate(k);
            assert!((total - 1.0).abs() <= 1e-6, "{total}");
        }
    }
}

#[test]
fn threads_do_not_change_the_fit() {
    let d = cr_sample(300, 4);
    let fit = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            (
                fit_rsf_competing(&d, &small(12, 9)).unwrap(),
                fit_conditional_ensemble(&d.to_single_risk(), &small(12, 9)).unwrap(),
            )
        })
    };
    let one = fit(1);
    for threads in [2, 4] {
        assert!(fit(threads) == one);
    }
}

#[test]
fn json_roundtrip_predicts_identically() {
    let d = cr_sample(300, 6);
    let models = [
        fit_rsf(&d.to_single_risk(), &small(8, 1)).unwrap(),
        fit_conditional_ensemble(&d.to_single_risk(), &small(8, 1)).unwrap(),
        fit_conditional_ensemble(
            &d.to_single_risk(),
            &ForestConfig {
                aggregation: Aggregation::Mean,
                ..small(8, 1)
            },
        )
        .unwrap(),
        fit_rsf_competing(&d, &small(8, 1)).unwrap(),
    ];
    for m in models {
        let back: ForestModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert!(back == m);
        for x in grid() {
            let (a, b) = (predict_forest_survival(&m, &x).unwrap(), predict_forest_survival(&back, &x).unwrap());
            assert_eq!(a.values(), b.values());
            assert_eq!(predict_forest_median(&m, &x).unwrap(), predict_forest_median(&back, &x).unwrap());
        }
    }
}

#[test]
fn corrupt_forest_json_is_rejected() {
    let m = fit_rsf(&cr_sample(200, 7).to_single_risk(), &small(2, 1)).unwrap();
    let text = serde_json::to_string(&m).unwrap();
    let broken = text.replacen("\"feature\":0", "\"feature\":7", 1).replacen("\"feature\":1", "\"feature\":7", 1);
    assert_ne!(broken, text);
    assert!(serde_json::from_str::<ForestModel>(&broken).is_err());
    let no_trees = text.replacen("\"trees\":[", "\"trees\":[],\"x\":[", 1);
    assert!(serde_json::from_str::<ForestModel>(&no_trees).is_err());
}

#[test]
fn hazard_prediction_errors() {
    let d = cr_sample(200, 8).to_single_risk();
    let m = fit_conditional_ensemble(&d, &small(2, 1)).unwrap();
    assert!(matches!(
        predict_forest_cumulative_hazard(&m, &[0.5, 0.5], EventStatus::Converted),
        Err(Error::InvalidModel(_))
    ));
    let r = fit_rsf(&d, &small(2, 1)).unwrap();
    assert!(matches!(
        predict_forest_cumulative_hazard(&r, &[0.5, 0.5], EventStatus::Churned),
        Err(Error::InvalidEvent(_))
    ));
}

#[test]
fn rsf_prefers_many_cutpoints_conditional_does_not() {
    let cfg = ForestConfig {
        mtry: Some(2),
        min_node_events: 5,
        ..ForestConfig::default()
    };
    let (mut rsf, mut cond, mut rsf_n, mut cond_n) = (0, 0, 0, 0);
    for seed in 0..300 {
        let d = noise_dataset(120, seed);
        if let Some(f) = root_split_feature(&d, &cfg, ForestKind::Rsf).unwrap() {
            rsf_n += 1;
            rsf += usize::from(f == 1);
        }
        if let Some(f) = root_split_feature(&d, &cfg, ForestKind::ConditionalEnsemble).unwrap() {
            cond_n += 1;
            cond += usize::from(f == 1);
        }
    }
    let rsf_share = rsf as f64 / rsf_n as f64;
    let cond_share = cond as f64 / cond_n as f64;
    assert!(rsf_share > 0.65, "{rsf_share}");
    assert!((2.0 * cond_share - 1.0).abs() < 0.15, "{cond_share}");
}

fn obs_strategy() -> impl Strategy<Value = Vec<Obs>> {
    prop::collection::vec((1u32..10, 0u8..3), 2..25).prop_map(|v| {
        v.into_iter()
            .map(|(t, c)| {
                let s = match c {
                    0 => EventStatus::Converted,
                    1 => EventStatus::Churned,
                    _ => EventStatus::Censored,
                };
                (f64::from(t), s)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stumps_reproduce_pooled_estimators(obs in obs_strategy()) {
        let cr = dataset_from(&obs, true);
        let single = cr.to_single_risk();
        let has = |s| obs.iter().any(|o| o.1 == s);
        if has(EventStatus::Converted) || has(EventStatus::Churned) {
            if has(EventStatus::Converted) {
                let rsf = fit_rsf(&single, &stump()).unwrap();
                let s = predict_forest_survival(&rsf, &[]).unwrap();
                let na = nelson_aalen(&single).unwrap();
                prop_assert_eq!(s.knots(), na.knots());
                for (a, h) in s.values().iter().zip(na.values()) {
                    prop_assert!((a - (-h).exp()).abs() <= 1e-9);
                }
                for agg in [Aggregation::Pooled, Aggregation::Mean] {
                    let cfg = ForestConfig { aggregation: agg, ..stump() };
                    let c = fit_conditional_ensemble(&single, &cfg).unwrap();
                    let s = predict_forest_survival(&c, &[]).unwrap();
                    let km = kaplan_meier(&single).unwrap();
                    prop_assert_eq!(s.knots(), km.knots());
                    for (a, b) in s.values().iter().zip(km.values()) {
                        prop_assert!((a - b).abs() <= 1e-9);
                    }
                }
            }
            if has(EventStatus::Converted) && has(EventStatus::Churned) {
                let m = fit_rsf_competing(&cr, &stump()).unwrap();
                for ev in [EventStatus::Converted, EventStatus::Churned] {
                    let c = predict_forest_incidence(&m, &[], ev).unwrap();
                    let aj = aalen_johansen(&cr, ev).unwrap();
                    for &k in aj.knots() {
                        prop_assert!((c.evaluate(k) - aj.evaluate(k)).abs() <= 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn forest_curves_are_valid(seed in 0u64..500, x0 in 0.0f64..1.0, x1 in 0.0f64..1.0) {
        let d = cr_sample(150, seed);
        let rsf = fit_rsf(&d.to_single_risk(), &small(4, seed)).unwrap();
        let s = predict_forest_survival(&rsf, &[x0, x1]).unwrap();
        prop_assert!(s.is_valid_survival());
        let cr = fit_rsf_competing(&d, &small(4, seed)).unwrap();
        prop_assert!(predict_forest_incidence(&cr, &[x0, x1], EventStatus::Converted).unwrap().is_valid_incidence());
    }
}
