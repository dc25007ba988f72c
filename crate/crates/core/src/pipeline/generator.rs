//! Synthetic player logs with known conversion and churn behaviour.
//!
//! Each player gets two latent engagement scores `e1, e2 ~ N(0, 1)`:
//! `e1` drives playtime and progression speed, `e2` drives how often the
//! player shows up and how many actions a session holds.
//!
//! * A fraction `one_time_comer_rate` of players log in once and never return.
//! * Everyone else converts with probability
//!   `logistic(a0 + 2.7 e1 + 1.8 e2 + 1.8 [e1 > 1] e2)`, where `a0` is solved
//!   so the population mean equals `pu_propensity`.
//! * Days to conversion follow a Weibull law with shape `conversion_shape`
//!   and scale `conversion_scale * exp(-0.8 [e1 > 0.5] - 0.4 e1 e2)`,
//!   truncated to the days left in the window (at least one day after
//!   registration). The threshold and interaction terms put the model
//!   outside the proportional-hazards family.
//! * Days until a player stops (after conversion, for converters) follow a
//!   Weibull law with shape `churn_shape` and scale
//!   `churn_scale * exp(0.4 e2 + 0.2 e1)`.
//! * Between registration and the last day a player is active each day with
//!   probability `logistic(0.3 + 0.8 e2)`; registration, conversion and last
//!   days are always active. Daily playtime is log-normal with log-mean
//!   `-0.3 + 0.5 e1` and log-sd 0.6, sessions are `1 + Poisson(1.5 h)`,
//!   actions `Poisson(15 sessions exp(0.3 e2))`, and the level is
//!   `1 + floor(xp / 2)` with experience accumulating at `h exp(0.3 e2)`
//!   per day.
//!
//! Every player draws from its own ChaCha stream, so output depends only on
//! the seed and the player index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson, StandardNormal, Weibull};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{DayRow, PlayerLog};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_players: usize,
    /// Converter fraction among players who return after the first day.
    pub pu_propensity: f64,
    pub observation_window_days: u32,
    pub one_time_comer_rate: f64,
    pub conversion_shape: f64,
    pub conversion_scale: f64,
    pub churn_shape: f64,
    pub churn_scale: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_players: 20_000,
            pu_propensity: 0.053,
            observation_window_days: 90,
            one_time_comer_rate: 0.3,
            conversion_shape: 1.8,
            conversion_scale: 15.0,
            churn_shape: 0.8,
            churn_scale: 300.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        if self.observation_window_days < 2 {
            return Err(Error::Config(format!(
                "observation window of {} days leaves no room for a second login",
                self.observation_window_days
            )));
        }
        if !(0.0..1.0).contains(&self.pu_propensity) {
            return Err(Error::Config(format!(
                "pu rate {} outside [0, 1)",
                self.pu_propensity
            )));
        }
        if !(0.0..1.0).contains(&self.one_time_comer_rate) {
            return Err(Error::Config(format!(
                "one-time-comer rate {} outside [0, 1)",
                self.one_time_comer_rate
            )));
        }
        for (name, v) in [
            ("conversion shape", self.conversion_shape),
            ("conversion scale", self.conversion_scale),
            ("churn shape", self.churn_shape),
            ("churn scale", self.churn_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// What the generator decided for a player, kept apart from the logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub player_id: String,
    pub true_converter: bool,
    pub true_conversion_day: Option<i64>,
    /// Last active day of a player who stopped before the end of the window.
    pub true_churn_day: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub logs: Vec<PlayerLog>,
    pub truth: Vec<GroundTruth>,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn conversion_logit(e1: f64, e2: f64) -> f64 {
    let step = if e1 > 1.0 { e2 } else { 0.0 };
    2.7 * e1 + 1.8 * e2 + 1.8 * step
}

/// Intercept giving mean conversion probability `target` under standard
/// normal latents, by bisection over a fixed quantile grid.
fn calibrate_intercept(target: f64) -> f64 {
    const GRID: usize = 200;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let q: Vec<f64> = (0..GRID)
        .map(|i| normal.inverse_cdf((i as f64 + 0.5) / GRID as f64))
        .collect();
    let logits: Vec<f64> = q
        .iter()
        .flat_map(|&a| q.iter().map(move |&b| conversion_logit(a, b)))
        .collect();
    let mean = |a0: f64| logits.iter().map(|&z| logistic(a0 + z)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Inverse-CDF draw from a Weibull law truncated to `(0, upper]`.
fn truncated_weibull(rng: &mut ChaCha8Rng, shape: f64, scale: f64, upper: f64) -> f64 {
    let f_upper = -(-(upper / scale).powf(shape)).exp_m1();
    let u: f64 = rng.random::<f64>() * f_upper;
    scale * (-(-u).ln_1p()).powf(1.0 / shape)
}

fn player(cfg: &GeneratorConfig, a0: f64, index: usize) -> (PlayerLog, GroundTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let e1: f64 = StandardNormal.sample(&mut rng);
    let e2: f64 = StandardNormal.sample(&mut rng);
    let data_end = i64::from(cfg.observation_window_days) - 1;
    let reg = rng.random_range(0..data_end);
    let id = format!("p{index:07}");
    let one_timer = rng.random::<f64>() < cfg.one_time_comer_rate;

    let converts = !one_timer
        && cfg.pu_propensity > 0.0
        && rng.random::<f64>() < logistic(a0 + conversion_logit(e1, e2));
    let span = (data_end - reg) as f64;
    let conv_exponent = (-0.8 * f64::from(u8::from(e1 > 0.5)) - 0.4 * e1 * e2).clamp(-3.0, 3.0);
    let conv_scale = cfg.conversion_scale * conv_exponent.exp();
    let conv_day = converts.then(|| {
        let t = truncated_weibull(&mut rng, cfg.conversion_shape, conv_scale, span);
        reg + (t.ceil() as i64).clamp(1, data_end - reg)
    });
    let churn_scale = cfg.churn_scale * (0.4 * e2 + 0.2 * e1).exp();
    let churn = Weibull::new(churn_scale, cfg.churn_shape).expect("validated churn law");
    let stay = (churn.sample(&mut rng).ceil() as i64).max(1);
    let last_day = if one_timer {
        reg
    } else {
        (conv_day.unwrap_or(reg) + stay).min(data_end)
    };

    let p_active = logistic(0.3 + 0.8 * e2);
    let daily = LogNormal::new(-0.3 + 0.5 * e1, 0.6).expect("valid log-normal");
    let xp_rate = (0.3 * e2).exp();
    let action_rate = 15.0 * (0.3 * e2).exp();
    let mut xp = 0.0;
    let mut rows = Vec::new();
    for day in reg..=last_day {
        let forced = day == reg || day == last_day || Some(day) == conv_day;
        if !forced && rng.random::<f64>() >= p_active {
            continue;
        }
        let hours = round3(daily.sample(&mut rng));
        let sessions = 1 + poisson(&mut rng, 1.5 * hours);
        let actions = poisson(&mut rng, action_rate * f64::from(sessions));
        xp += hours * xp_rate;
        let purchases = match conv_day {
            Some(c) if day == c => 1 + u32::from(rng.random::<f64>() < 0.3),
            Some(c) if day > c => u32::from(rng.random::<f64>() < 0.15),
            _ => 0,
        };
        rows.push(DayRow {
            day_index: day,
            playtime_hours: hours,
            level: 1 + (xp / 2.0).floor() as u32,
            sessions,
            actions,
            purchases,
        });
    }
    let truth = GroundTruth {
        player_id: id.clone(),
        true_converter: converts,
        true_conversion_day: conv_day,
        true_churn_day: (last_day < data_end).then_some(last_day),
    };
    let log = PlayerLog {
        player_id: id,
        registration_day: reg,
        rows,
    };
    (log, truth)
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive Poisson mean");
    let v: f64 = d.sample(rng);
    v.min(f64::from(u32::MAX)) as u32
}

/// Draw logs and ground truth for `cfg.n_players` players.
pub fn generate_synthetic(cfg: &GeneratorConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let a0 = if cfg.pu_propensity > 0.0 {
        calibrate_intercept(cfg.pu_propensity)
    } else {
        f64::NEG_INFINITY
    };
    let (logs, truth) = (0..cfg.n_players)
        .into_par_iter()
        .map(|i| player(cfg, a0, i))
        .unzip();
    Ok(SyntheticData { logs, truth })
}
