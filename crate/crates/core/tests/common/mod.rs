//! Brute-force reference implementations shared by the integration suites
//! and the acceptance runner. Everything here rescans the raw observations
//! at each query point instead of reusing the library's risk tables.

#![allow(dead_code)]

use convsurv::{EventStatus, SurvivalDataset, SurvivalRecord, TimeAxis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

pub type Obs = (f64, EventStatus);

fn at_risk(obs: &[Obs], s: f64) -> f64 {
    obs.iter().filter(|o| o.0 >= s).count() as f64
}

fn deaths(obs: &[Obs], s: f64, keep: impl Fn(EventStatus) -> bool) -> f64 {
    obs.iter().filter(|o| o.0 == s && keep(o.1)).count() as f64
}

fn event_times_upto(obs: &[Obs], t: f64, strict: bool) -> Vec<f64> {
    let mut v: Vec<f64> = obs
        .iter()
        .filter(|o| o.1.is_event() && if strict { o.0 < t } else { o.0 <= t })
        .map(|o| o.0)
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `prod_{s <= t} (1 - d(s) / Y(s))` over all-cause event times.
pub fn km(obs: &[Obs], t: f64) -> f64 {
    km_impl(obs, t, false)
}

fn km_impl(obs: &[Obs], t: f64, strict: bool) -> f64 {
    event_times_upto(obs, t, strict)
        .into_iter()
        .map(|s| 1.0 - deaths(obs, s, |e| e.is_event()) / at_risk(obs, s))
        .product()
}

/// `sum_{s <= t} d(s) / Y(s)`.
pub fn na(obs: &[Obs], t: f64) -> f64 {
    event_times_upto(obs, t, false)
        .into_iter()
        .map(|s| deaths(obs, s, |e| e.is_event()) / at_risk(obs, s))
        .sum()
}

/// `sum_{s <= t} S(s-) d_j(s) / Y(s)`.
pub fn aj(obs: &[Obs], event: EventStatus, t: f64) -> f64 {
    event_times_upto(obs, t, false)
        .into_iter()
        .map(|s| km_impl(obs, s, true) * deaths(obs, s, |e| e == event) / at_risk(obs, s))
        .sum()
}

/// Query points: every observed time, midpoints, and points outside the range.
pub fn probes(obs: &[Obs]) -> Vec<f64> {
    let mut t: Vec<f64> = obs.iter().map(|o| o.0).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    let mut out = vec![-1.0, 0.0];
    for w in t.windows(2) {
        out.push(0.5 * (w[0] + w[1]));
    }
    out.extend(t.iter().copied());
    out.push(t.last().copied().unwrap_or(0.0) + 10.0);
    out
}

pub fn dataset_from(obs: &[Obs], competing: bool) -> SurvivalDataset {
    SurvivalDataset::from_times(obs, TimeAxis::Lifetime, competing).unwrap()
}

/// Random small dataset with heavy ties and both event types.
pub fn random_obs(rng: &mut ChaCha8Rng, n: usize, competing: bool) -> Vec<Obs> {
    (0..n)
        .map(|_| {
            let t = f64::from(rng.random_range(0..8u32)) * 0.5;
            let u: f64 = rng.random();
            let status = if u < 0.45 {
                EventStatus::Converted
            } else if competing && u < 0.7 {
                EventStatus::Churned
            } else {
                EventStatus::Censored
            };
            (t, status)
        })
        .collect()
}

/// Breslow log partial likelihood, written from its definition.
pub fn cox_loglik(rows: &[(f64, bool, Vec<f64>)], beta: &[f64]) -> f64 {
    let lp = |x: &[f64]| x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
    rows.iter()
        .filter(|r| r.1)
        .map(|(ti, _, xi)| {
            let denom: f64 = rows
                .iter()
                .filter(|r| r.0 >= *ti)
                .map(|r| lp(&r.2).exp())
                .sum();
            lp(xi) - denom.ln()
        })
        .sum()
}

pub fn cox_dataset(rows: &[(f64, bool, Vec<f64>)]) -> SurvivalDataset {
    let p = rows.first().map_or(0, |r| r.2.len());
    let recs = rows
        .iter()
        .enumerate()
        .map(|(i, (t, e, x))| {
            let s = if *e {
                EventStatus::Converted
            } else {
                EventStatus::Censored
            };
            SurvivalRecord::new(format!("s{i}"), *t, s, x.clone())
        })
        .collect();
    SurvivalDataset::new(recs, (0..p).map(|j| format!("x{j}")).collect(), TimeAxis::Lifetime, false)
        .unwrap()
}

/// Proportional-hazards draw: exponential baseline with rate 0.1, covariates
/// standard normal, independent exponential censoring with rate 0.05.
pub fn ph_sample(n: usize, beta: &[f64], seed: u64) -> Vec<(f64, bool, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cens = Exp::new(0.05).unwrap();
    (0..n)
        .map(|_| {
            let x: Vec<f64> = beta.iter().map(|_| StandardNormal.sample(&mut rng)).collect();
            let rate = 0.1 * x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp();
            let t = Exp::new(rate).unwrap().sample(&mut rng);
            let c = cens.sample(&mut rng);
            (t.min(c), t <= c, x)
        })
        .collect()
}

/// Maximiser of a concave function on `[lo, hi]`: a 0.01 grid, then golden
/// section in the best cell.
pub fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let steps = ((hi - lo) / 0.01).round() as usize;
    let best = (0..=steps)
        .map(|k| lo + 0.01 * k as f64)
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    let (mut a, mut b) = (best - 0.01, best + 0.01);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Pure-noise data with a binary and a 100-level feature, for split-bias probes.
pub fn noise_dataset(n: usize, seed: u64) -> SurvivalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let recs = (0..n)
        .map(|i| {
            let t: f64 = rng.random_range(1.0..100.0);
            let s = if rng.random::<f64>() < 0.7 {
                EventStatus::Converted
            } else {
                EventStatus::Censored
            };
            let x = vec![
                f64::from(rng.random_range(0..2u32)),
                f64::from(rng.random_range(0..100u32)),
            ];
            SurvivalRecord::new(format!("s{i}"), t, s, x)
        })
        .collect();
    SurvivalDataset::new(recs, vec!["binary".into(), "many".into()], TimeAxis::Lifetime, false)
        .unwrap()
}

/// Two-covariate competing-risks sample: conversion and churn times are
/// exponential with rates driven by `x0` and `x1`, censored at 30.
pub fn cr_sample(n: usize, seed: u64) -> SurvivalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let recs = (0..n)
        .map(|i| {
            let x0: f64 = rng.random();
            let x1: f64 = rng.random();
            let conv = Exp::new(0.02 + 0.2 * x0).unwrap().sample(&mut rng);
            let churn = Exp::new(0.02 + 0.1 * x1).unwrap().sample(&mut rng);
            let (t, s) = if conv.min(churn) > 30.0 {
                (30.0, EventStatus::Censored)
            } else if conv < churn {
                (conv, EventStatus::Converted)
            } else {
                (churn, EventStatus::Churned)
            };
            SurvivalRecord::new(format!("s{i}"), (t * 10.0).ceil() / 10.0, s, vec![x0, x1])
        })
        .collect();
    SurvivalDataset::new(recs, vec!["x0".into(), "x1".into()], TimeAxis::Lifetime, true).unwrap()
}
