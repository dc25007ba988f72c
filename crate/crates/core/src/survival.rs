//! Shared survival-analysis domain types: time axes, event codes, censored
//! records, datasets and right-continuous step functions.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The scale on which conversion "time" is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeAxis {
    /// Days since registration.
    Lifetime,
    /// Game level reached.
    Level,
    /// Cumulative hours played.
    Playtime,
}

impl TimeAxis {
    pub const ALL: [TimeAxis; 3] = [TimeAxis::Lifetime, TimeAxis::Level, TimeAxis::Playtime];

    pub fn as_str(self) -> &'static str {
        match self {
            TimeAxis::Lifetime => "lifetime",
            TimeAxis::Level => "level",
            TimeAxis::Playtime => "playtime",
        }
    }
}

impl fmt::Display for TimeAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimeAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lifetime" => Ok(TimeAxis::Lifetime),
            "level" => Ok(TimeAxis::Level),
            "playtime" => Ok(TimeAxis::Playtime),
            other => Err(Error::Config(format!(
                "unknown time axis `{other}` (expected lifetime, level or playtime)"
            ))),
        }
    }
}

/// Observed outcome for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventStatus {
    /// First purchase observed.
    Converted,
    /// Churned before converting (competing event).
    Churned,
    /// Observation ended without either event.
    Censored,
}

impl EventStatus {
    pub fn is_event(self) -> bool {
        !matches!(self, EventStatus::Censored)
    }

    /// Sort rank at equal times: events before censorings.
    pub(crate) fn tie_rank(self) -> u8 {
        match self {
            EventStatus::Converted => 0,
            EventStatus::Churned => 1,
            EventStatus::Censored => 2,
        }
    }
}

/// One subject's censored observation on a time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub subject_id: String,
    pub time: f64,
    pub status: EventStatus,
    pub covariates: Vec<f64>,
}

impl SurvivalRecord {
    pub fn new(
        subject_id: impl Into<String>,
        time: f64,
        status: EventStatus,
        covariates: Vec<f64>,
    ) -> Self {
        Self {
            subject_id: subject_id.into(),
            time,
            status,
            covariates,
        }
    }
}

/// A validated collection of records sharing one axis and feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    records: Vec<SurvivalRecord>,
    feature_names: Vec<String>,
    axis: TimeAxis,
    competing_risks: bool,
}

impl SurvivalDataset {
    pub fn new(
        records: Vec<SurvivalRecord>,
        feature_names: Vec<String>,
        axis: TimeAxis,
        competing_risks: bool,
    ) -> Result<Self> {
        let p = feature_names.len();
        let mut names = HashSet::with_capacity(p);
        for name in &feature_names {
            if !names.insert(name.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate feature name `{name}`"
                )));
            }
        }
        let mut ids = HashSet::with_capacity(records.len());
        for r in &records {
            if !ids.insert(r.subject_id.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate subject id `{}`",
                    r.subject_id
                )));
            }
            if !r.time.is_finite() || r.time < 0.0 {
                return Err(Error::InvalidDataset(format!(
                    "subject `{}` has invalid time {}",
                    r.subject_id, r.time
                )));
            }
            if r.covariates.len() != p {
                return Err(Error::InvalidDataset(format!(
                    "subject `{}` has {} covariates, expected {p}",
                    r.subject_id,
                    r.covariates.len()
                )));
            }
            if r.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "subject `{}` has a non-finite covariate",
                    r.subject_id
                )));
            }
            if !competing_risks && r.status == EventStatus::Churned {
                return Err(Error::InvalidDataset(format!(
                    "subject `{}` is churned but the dataset is not a competing-risks dataset",
                    r.subject_id
                )));
            }
        }
        Ok(Self {
            records,
            feature_names,
            axis,
            competing_risks,
        })
    }

    /// Convenience constructor for tests and small tools: no covariates.
    pub fn from_times(
        rows: &[(f64, EventStatus)],
        axis: TimeAxis,
        competing_risks: bool,
    ) -> Result<Self> {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, &(t, s))| SurvivalRecord::new(format!("s{i}"), t, s, Vec::new()))
            .collect();
        Self::new(records, Vec::new(), axis, competing_risks)
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn axis(&self) -> TimeAxis {
        self.axis
    }

    pub fn competing_risks(&self) -> bool {
        self.competing_risks
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn count_status(&self, status: EventStatus) -> usize {
        self.records.iter().filter(|r| r.status == status).count()
    }

    /// Single-risk view: churned rows become censored.
    pub fn to_single_risk(&self) -> SurvivalDataset {
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if r.status == EventStatus::Churned {
                    r.status = EventStatus::Censored;
                }
                r
            })
            .collect();
        SurvivalDataset {
            records,
            feature_names: self.feature_names.clone(),
            axis: self.axis,
            competing_risks: false,
        }
    }

    /// Subset by predicate, keeping metadata.
    pub fn filter<F: FnMut(&SurvivalRecord) -> bool>(&self, mut keep: F) -> SurvivalDataset {
        SurvivalDataset {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            feature_names: self.feature_names.clone(),
            axis: self.axis,
            competing_risks: self.competing_risks,
        }
    }

    /// Observations stable-sorted by time with events before censorings at ties.
    pub fn sorted_observations(&self) -> Vec<(f64, EventStatus)> {
        let mut obs: Vec<(f64, EventStatus)> =
            self.records.iter().map(|r| (r.time, r.status)).collect();
        obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.tie_rank().cmp(&b.1.tie_rank())));
        obs
    }
}

/// Right-continuous piecewise-constant function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepRepr")]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    left_value: f64,
}

#[derive(Deserialize)]
struct StepRepr {
    knots: Vec<f64>,
    values: Vec<f64>,
    left_value: f64,
}

impl TryFrom<StepRepr> for StepFunction {
    type Error = Error;

    fn try_from(r: StepRepr) -> Result<Self> {
        StepFunction::new(r.knots, r.values, r.left_value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Decreasing,
    Increasing,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, left_value: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::InvalidCurve(format!(
                "{} knots but {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidCurve("non-finite knot".into()));
        }
        if values.iter().chain(std::iter::once(&left_value)).any(|v| v.is_nan()) {
            return Err(Error::InvalidCurve("NaN value".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidCurve("knots must be strictly increasing".into()));
        }
        Ok(Self {
            knots,
            values,
            left_value,
        })
    }

    /// Constant function with no knots.
    pub fn constant(value: f64) -> Self {
        Self {
            knots: Vec::new(),
            values: Vec::new(),
            left_value: value,
        }
    }

    /// Builder for internal code that already guarantees the invariants.
    pub(crate) fn from_parts_unchecked(knots: Vec<f64>, values: Vec<f64>, left_value: f64) -> Self {
        debug_assert_eq!(knots.len(), values.len());
        debug_assert!(knots.windows(2).all(|w| w[0] < w[1]));
        Self {
            knots,
            values,
            left_value,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_value(&self) -> f64 {
        self.left_value
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Value at the largest knot `<= t`, or the left value below the first knot.
    pub fn evaluate(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|&k| k <= t);
        if idx == 0 {
            self.left_value
        } else {
            self.values[idx - 1]
        }
    }

    /// Last value of the function (the plateau after the final knot).
    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.left_value)
    }

    fn is_non_increasing(&self) -> bool {
        let mut prev = self.left_value;
        self.values.iter().all(|&v| {
            let ok = v <= prev;
            prev = v;
            ok
        })
    }

    fn is_non_decreasing(&self) -> bool {
        let mut prev = self.left_value;
        self.values.iter().all(|&v| {
            let ok = v >= prev;
            prev = v;
            ok
        })
    }

    fn in_unit_interval(&self) -> bool {
        std::iter::once(&self.left_value)
            .chain(&self.values)
            .all(|v| (0.0..=1.0).contains(v))
    }

    /// Survival-curve invariants: starts at 1, non-increasing, inside `[0, 1]`.
    pub fn is_valid_survival(&self) -> bool {
        self.left_value == 1.0 && self.is_non_increasing() && self.in_unit_interval()
    }

    /// Incidence-curve invariants: starts at 0, non-decreasing, inside `[0, 1]`.
    pub fn is_valid_incidence(&self) -> bool {
        self.left_value == 0.0 && self.is_non_decreasing() && self.in_unit_interval()
    }

    /// Cumulative-hazard invariants: starts at 0, non-decreasing, non-negative.
    pub fn is_valid_cumulative_hazard(&self) -> bool {
        self.left_value == 0.0
            && self.is_non_decreasing()
            && self.values.iter().all(|&v| v >= 0.0)
    }

    fn direction(&self, threshold: f64) -> Option<Direction> {
        match (self.is_non_increasing(), self.is_non_decreasing()) {
            // Constant: a curve that starts above the threshold is read as a
            // survival curve, otherwise as an incidence curve.
            (true, true) if self.left_value > threshold => Some(Direction::Decreasing),
            (true, true) => Some(Direction::Increasing),
            (true, false) => Some(Direction::Decreasing),
            (false, true) => Some(Direction::Increasing),
            (false, false) => None,
        }
    }

    /// Apply `f` to every value (including the left value).
    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> StepFunction {
        StepFunction {
            knots: self.knots.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            left_value: f(self.left_value),
        }
    }
}

/// Value of the right-continuous step function at `t`.
pub fn evaluate_step(f: &StepFunction, t: f64) -> f64 {
    f.evaluate(t)
}

/// First knot at which a monotone curve crosses `threshold`.
///
/// Non-increasing curves cross when the value drops to `<= threshold`;
/// non-decreasing curves when it rises to `>= threshold`.
pub fn median_crossing(f: &StepFunction, threshold: f64) -> Result<Option<f64>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!(
            "crossing threshold {threshold} outside (0, 1)"
        )));
    }
    let direction = f
        .direction(threshold)
        .ok_or_else(|| Error::InvalidCurve("curve is not monotone".into()))?;
    let pos = match direction {
        Direction::Decreasing => f.values.iter().position(|&v| v <= threshold),
        Direction::Increasing => f.values.iter().position(|&v| v >= threshold),
    };
    Ok(pos.map(|i| f.knots[i]))
}

/// Pointwise complement `1 - f`.
///
/// Maps a survival curve to the matching cumulative incidence curve. The
/// complement of a valid incidence curve is accepted too, so applying the
/// function twice returns the original curve.
pub fn survival_to_incidence(f: &StepFunction) -> Result<StepFunction> {
    if !(f.is_valid_survival() || f.is_valid_incidence()) {
        return Err(Error::InvalidCurve(
            "expected a survival curve (or its complement)".into(),
        ));
    }
    Ok(f.map_values(|v| 1.0 - v))
}
