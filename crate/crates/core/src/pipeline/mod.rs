//! Player logs to survival datasets: ingestion, the newcomer filter, feature
//! engineering and response construction on the three time axes.
//!
//! Feature set (frozen; the same on every axis), computed from the rows with
//! `day_index < cutoff` where the cutoff is the event or censoring day:
//!
//! | name | definition | empty-window default |
//! |---|---|---|
//! | `mean_playtime` | mean daily playtime hours over active days | 0 |
//! | `max_playtime` | largest daily playtime | 0 |
//! | `std_playtime` | sample standard deviation (0 when fewer than 2 days) | 0 |
//! | `total_sessions` | summed sessions | 0 |
//! | `actions_per_session` | summed actions / summed sessions (0 without sessions) | 0 |
//! | `active_day_ratio` | active days / days elapsed since registration | 0 |
//! | `current_level` | level on the last active day | 0 |
//! | `level_velocity` | (last level - first level) / active days | 0 |
//! | `days_since_registration` | cutoff - registration day | cutoff - registration day |
//!
//! Models see the [`FeatureSet::Rates`] subset by default. `total_sessions`,
//! `current_level` and `days_since_registration` grow with the window, and
//! since the window ends at the event they restate the response itself
//! (`days_since_registration` *is* the lifetime). [`FeatureSet::All`] keeps
//! them for experiments.

mod generator;
mod ingest;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{EventStatus, SurvivalDataset, SurvivalRecord, TimeAxis};

pub use generator::{generate_synthetic, GeneratorConfig, GroundTruth, SyntheticData};
pub use ingest::{
    ingest_logs, read_features, read_ground_truth, read_logs, write_features,
    write_ground_truth, write_logs, FeatureTable,
};

pub const FEATURE_NAMES: [&str; 9] = [
    "mean_playtime",
    "max_playtime",
    "std_playtime",
    "total_sessions",
    "actions_per_session",
    "active_day_ratio",
    "current_level",
    "level_velocity",
    "days_since_registration",
];

/// Default inactivity (in days before the end of data) that marks churn.
pub const DEFAULT_CHURN_WINDOW: u32 = 9;

pub fn feature_names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Which engineered columns become model covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// Per-day and per-session rates only.
    #[default]
    Rates,
    All,
}

const RATE_COLUMNS: [usize; 6] = [0, 1, 2, 4, 5, 7];

impl FeatureSet {
    /// Positions in the full engineered vector.
    pub fn columns(self) -> Vec<usize> {
        match self {
            FeatureSet::Rates => RATE_COLUMNS.to_vec(),
            FeatureSet::All => (0..FEATURE_NAMES.len()).collect(),
        }
    }

    pub fn names(self) -> Vec<String> {
        self.columns().into_iter().map(|i| FEATURE_NAMES[i].to_string()).collect()
    }

    pub fn select(self, full: &[f64]) -> Vec<f64> {
        self.columns().into_iter().map(|i| full[i]).collect()
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rates" => Ok(FeatureSet::Rates),
            "all" => Ok(FeatureSet::All),
            _ => Err(Error::Config(format!("unknown feature set `{s}` (expected rates or all)"))),
        }
    }
}

/// Identifier of a feature layout, stored in model files so that models are
/// only applied to data engineered the same way.
pub fn feature_spec_hash(names: &[String]) -> String {
    let mut text = String::from("convsurv-features-v1:");
    text.push_str(&names.join(","));
    let h = text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    });
    format!("{h:016x}")
}

/// One day of activity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayRow {
    pub day_index: i64,
    pub playtime_hours: f64,
    pub level: u32,
    pub sessions: u32,
    pub actions: u32,
    pub purchases: u32,
}

/// A player's daily activity, rows sorted by day with unique days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerLog {
    pub player_id: String,
    pub registration_day: i64,
    pub rows: Vec<DayRow>,
}

impl PlayerLog {
    /// Build a log, sorting rows and checking the per-player invariants.
    /// The registration day is the first active day.
    pub fn new(player_id: impl Into<String>, mut rows: Vec<DayRow>) -> Result<Self> {
        let player_id = player_id.into();
        let invalid = |message: String| Error::Validation {
            player: player_id.clone(),
            message,
        };
        if rows.is_empty() {
            return Err(invalid("no activity rows".into()));
        }
        rows.sort_by_key(|r| r.day_index);
        for w in rows.windows(2) {
            if w[0].day_index == w[1].day_index {
                return Err(invalid(format!("day {} appears twice", w[0].day_index)));
            }
            if w[1].level < w[0].level {
                return Err(invalid(format!(
                    "level decreases from {} on day {} to {} on day {}",
                    w[0].level, w[0].day_index, w[1].level, w[1].day_index
                )));
            }
        }
        for r in &rows {
            if r.level == 0 {
                return Err(invalid(format!("level 0 on day {}", r.day_index)));
            }
            if !(r.playtime_hours.is_finite() && r.playtime_hours >= 0.0) {
                return Err(invalid(format!("invalid playtime on day {}", r.day_index)));
            }
        }
        Ok(Self {
            registration_day: rows[0].day_index,
            player_id,
            rows,
        })
    }

    pub fn first_purchase(&self) -> Option<&DayRow> {
        self.rows.iter().find(|r| r.purchases > 0)
    }

    pub fn last_row(&self) -> &DayRow {
        self.rows.last().expect("non-empty log")
    }
}

/// Options for turning logs into a survival dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Inactivity at the end of the data (days) that counts as churn.
    pub churn_window: u32,
    /// Last day covered by the data; defaults to the latest day in the logs.
    pub data_end: Option<i64>,
    #[serde(default)]
    pub feature_set: FeatureSet,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            churn_window: DEFAULT_CHURN_WINDOW,
            data_end: None,
            feature_set: FeatureSet::Rates,
        }
    }
}

/// Players with at least two distinct active days.
pub fn filter_newcomers(logs: Vec<PlayerLog>) -> Vec<PlayerLog> {
    logs.into_iter().filter(|l| l.rows.len() >= 2).collect()
}

/// Feature vector from the rows strictly before `cutoff`. The flag is set
/// when that window is empty and the defaults were used.
pub fn engineer_features(log: &PlayerLog, cutoff: i64) -> (Vec<f64>, bool) {
    let window: Vec<&DayRow> = log.rows.iter().filter(|r| r.day_index < cutoff).collect();
    let elapsed = (cutoff - log.registration_day) as f64;
    if window.is_empty() {
        let mut v = vec![0.0; FEATURE_NAMES.len()];
        v[8] = elapsed;
        return (v, true);
    }
    let n = window.len() as f64;
    let play: Vec<f64> = window.iter().map(|r| r.playtime_hours).collect();
    let mean = play.iter().sum::<f64>() / n;
    let max = play.iter().copied().fold(0.0, f64::max);
    let std = if window.len() < 2 {
        0.0
    } else {
        (play.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let sessions: u64 = window.iter().map(|r| u64::from(r.sessions)).sum();
    let actions: u64 = window.iter().map(|r| u64::from(r.actions)).sum();
    let aps = if sessions == 0 {
        0.0
    } else {
        actions as f64 / sessions as f64
    };
    let ratio = if elapsed > 0.0 { n / elapsed } else { 0.0 };
    let first = window[0].level;
    let last = window[window.len() - 1].level;
    (
        vec![
            mean,
            max,
            std,
            sessions as f64,
            aps,
            ratio,
            f64::from(last),
            f64::from(last - first) / n,
            elapsed,
        ],
        false,
    )
}

/// Observed outcome of one player: status, the day features are cut at,
/// and the times on the three axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub status: EventStatus,
    pub day: i64,
    pub lifetime: f64,
    pub level: f64,
    pub playtime: f64,
}

impl Outcome {
    pub fn time(&self, axis: TimeAxis) -> f64 {
        match axis {
            TimeAxis::Lifetime => self.lifetime,
            TimeAxis::Level => self.level,
            TimeAxis::Playtime => self.playtime,
        }
    }
}

/// Latest day in the logs.
pub fn data_end(logs: &[PlayerLog]) -> Option<i64> {
    logs.iter().map(|l| l.last_row().day_index).max()
}

pub fn outcome(log: &PlayerLog, competing: bool, churn_window: u32, data_end: i64) -> Outcome {
    let (status, row) = match log.first_purchase() {
        Some(row) => (EventStatus::Converted, row),
        None => {
            let last = log.last_row();
            let churned =
                competing && data_end - last.day_index >= i64::from(churn_window);
            let status = if churned {
                EventStatus::Churned
            } else {
                EventStatus::Censored
            };
            (status, last)
        }
    };
    let playtime: f64 = log
        .rows
        .iter()
        .take_while(|r| r.day_index <= row.day_index)
        .map(|r| r.playtime_hours)
        .sum();
    Outcome {
        status,
        day: row.day_index,
        lifetime: (row.day_index - log.registration_day) as f64,
        level: f64::from(row.level),
        playtime,
    }
}

/// Survival dataset on `axis`: one record per player, in log order.
pub fn build_dataset(
    logs: &[PlayerLog],
    axis: TimeAxis,
    competing: bool,
    spec: &FeatureSpec,
) -> Result<SurvivalDataset> {
    let end = match spec.data_end.or_else(|| data_end(logs)) {
        Some(e) => e,
        None => return Err(Error::EmptyInput("no player logs".into())),
    };
    let records = logs
        .iter()
        .map(|log| {
            let o = outcome(log, competing, spec.churn_window, end);
            let (x, _) = engineer_features(log, o.day);
            let x = spec.feature_set.select(&x);
            SurvivalRecord::new(log.player_id.clone(), o.time(axis), o.status, x)
        })
        .collect();
    SurvivalDataset::new(records, spec.feature_set.names(), axis, competing)
}
