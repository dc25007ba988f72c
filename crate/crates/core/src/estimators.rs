//! Nonparametric estimators: Kaplan–Meier, Nelson–Aalen, Aalen–Johansen
//! cumulative incidence and Greenwood confidence bands.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::survival::{EventStatus, StepFunction, SurvivalDataset};

/// Counts at each distinct event time.
///
/// `censored[k]` counts censorings in `[t_k, t_{k+1})`; censorings before the
/// first event time are kept in `censored_before`. Censorings tied with an
/// event time are still at risk at that time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTable {
    pub event_times: Vec<f64>,
    pub at_risk: Vec<u32>,
    pub converted: Vec<u32>,
    pub churned: Vec<u32>,
    pub censored: Vec<u32>,
    pub censored_before: u32,
}

impl RiskTable {
    /// Build from raw `(time, status)` observations in any order.
    pub fn from_observations<I>(obs: I) -> Self
    where
        I: IntoIterator<Item = (f64, EventStatus)>,
    {
        let mut obs: Vec<(f64, EventStatus)> = obs.into_iter().collect();
        obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.tie_rank().cmp(&b.1.tie_rank())));
        Self::from_sorted(&obs)
    }

    /// Build from observations already sorted by time (events first at ties).
    pub(crate) fn from_sorted(obs: &[(f64, EventStatus)]) -> Self {
        let n = obs.len() as u32;
        let mut table = RiskTable {
            event_times: Vec::new(),
            at_risk: Vec::new(),
            converted: Vec::new(),
            churned: Vec::new(),
            censored: Vec::new(),
            censored_before: 0,
        };
        let mut removed = 0u32;
        let mut i = 0;
        while i < obs.len() {
            let t = obs[i].0;
            let mut j = i;
            let (mut conv, mut churn, mut cens) = (0u32, 0u32, 0u32);
            while j < obs.len() && obs[j].0 == t {
                match obs[j].1 {
                    EventStatus::Converted => conv += 1,
                    EventStatus::Churned => churn += 1,
                    EventStatus::Censored => cens += 1,
                }
                j += 1;
            }
            if conv + churn > 0 {
                table.event_times.push(t);
                table.at_risk.push(n - removed);
                table.converted.push(conv);
                table.churned.push(churn);
                table.censored.push(cens);
            } else if let Some(last) = table.censored.last_mut() {
                *last += cens;
            } else {
                table.censored_before += cens;
            }
            removed += conv + churn + cens;
            i = j;
        }
        table
    }

    pub fn len(&self) -> usize {
        self.event_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_times.is_empty()
    }

    /// All events (both types) at index `k`.
    pub fn events(&self, k: usize) -> u32 {
        self.converted[k] + self.churned[k]
    }

    pub fn events_of(&self, event: EventStatus, k: usize) -> u32 {
        match event {
            EventStatus::Converted => self.converted[k],
            EventStatus::Churned => self.churned[k],
            EventStatus::Censored => 0,
        }
    }

    pub fn total_events(&self) -> u32 {
        (0..self.len()).map(|k| self.events(k)).sum()
    }

    /// Number of observations summarised by the table.
    pub fn n_observations(&self) -> u32 {
        self.censored_before + self.censored.iter().sum::<u32>() + self.total_events()
    }

    /// All-cause product-limit survival `prod (1 - d_k / Q_k)`.
    pub fn kaplan_meier(&self) -> StepFunction {
        let mut s = 1.0;
        let values = (0..self.len())
            .map(|k| {
                s *= 1.0 - f64::from(self.events(k)) / f64::from(self.at_risk[k]);
                s
            })
            .collect();
        StepFunction::from_parts_unchecked(self.event_times.clone(), values, 1.0)
    }

    /// All-cause Nelson–Aalen cumulative hazard `sum d_k / Q_k`.
    pub fn nelson_aalen(&self) -> StepFunction {
        self.cumulative_hazard_by(|k| self.events(k))
    }

    /// Event-specific cumulative hazard `sum d_jk / Q_k`.
    pub fn cause_specific_hazard(&self, event: EventStatus) -> StepFunction {
        self.cumulative_hazard_by(|k| self.events_of(event, k))
    }

    fn cumulative_hazard_by<F: Fn(usize) -> u32>(&self, d: F) -> StepFunction {
        let mut h = 0.0;
        let values = (0..self.len())
            .map(|k| {
                h += f64::from(d(k)) / f64::from(self.at_risk[k]);
                h
            })
            .collect();
        StepFunction::from_parts_unchecked(self.event_times.clone(), values, 0.0)
    }

    /// Aalen–Johansen cumulative incidence for one event type:
    /// `sum S(t_{k-1}) d_jk / Q_k` with `S` the all-cause Kaplan–Meier.
    pub fn cumulative_incidence(&self, event: EventStatus) -> StepFunction {
        let mut s_prev = 1.0;
        let mut cif = 0.0;
        let values = (0..self.len())
            .map(|k| {
                let q = f64::from(self.at_risk[k]);
                cif += s_prev * f64::from(self.events_of(event, k)) / q;
                s_prev *= 1.0 - f64::from(self.events(k)) / q;
                cif
            })
            .collect();
        StepFunction::from_parts_unchecked(self.event_times.clone(), values, 0.0)
    }
}

fn require_nonempty(data: &SurvivalDataset) -> Result<()> {
    if data.is_empty() {
        Err(Error::EmptyInput("dataset has no records".into()))
    } else {
        Ok(())
    }
}

fn require_single_risk(data: &SurvivalDataset, what: &str) -> Result<()> {
    if data.competing_risks() {
        Err(Error::WrongEstimator(format!(
            "{what} needs a single-risk dataset; use aalen_johansen for competing risks"
        )))
    } else {
        Ok(())
    }
}

/// At-risk and event counts at each distinct event time.
pub fn risk_table(data: &SurvivalDataset) -> Result<RiskTable> {
    require_nonempty(data)?;
    Ok(RiskTable::from_sorted(&data.sorted_observations()))
}

/// Kaplan–Meier survival curve.
pub fn kaplan_meier(data: &SurvivalDataset) -> Result<StepFunction> {
    require_nonempty(data)?;
    require_single_risk(data, "kaplan_meier")?;
    Ok(risk_table(data)?.kaplan_meier())
}

/// Nelson–Aalen cumulative hazard.
pub fn nelson_aalen(data: &SurvivalDataset) -> Result<StepFunction> {
    require_nonempty(data)?;
    require_single_risk(data, "nelson_aalen")?;
    Ok(risk_table(data)?.nelson_aalen())
}

/// Aalen–Johansen cumulative incidence of `event` in the presence of the
/// other event type. On a single-risk dataset this is `1 - KM` for
/// `Converted` and zero for `Churned`.
pub fn aalen_johansen(data: &SurvivalDataset, event: EventStatus) -> Result<StepFunction> {
    if event == EventStatus::Censored {
        return Err(Error::InvalidEvent(
            "censoring is not an event type; use converted or churned".into(),
        ));
    }
    require_nonempty(data)?;
    Ok(risk_table(data)?.cumulative_incidence(event))
}

/// Pointwise confidence band for the Kaplan–Meier curve.
///
/// Greenwood variance of `log S`, normal quantile at `level`, back-transformed
/// as `S * exp(±z σ)` and clipped to `[0, 1]`. Once the curve reaches zero the
/// band collapses to zero.
pub fn km_confidence_band(
    data: &SurvivalDataset,
    level: f64,
) -> Result<(StepFunction, StepFunction)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0, 1)")));
    }
    require_nonempty(data)?;
    require_single_risk(data, "km_confidence_band")?;
    let table = risk_table(data)?;
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let mut s = 1.0;
    let mut var = 0.0;
    let mut lower = Vec::with_capacity(table.len());
    let mut upper = Vec::with_capacity(table.len());
    for k in 0..table.len() {
        let q = f64::from(table.at_risk[k]);
        let d = f64::from(table.events(k));
        s *= 1.0 - d / q;
        if q > d {
            var += d / (q * (q - d));
        }
        if s <= 0.0 {
            lower.push(0.0);
            upper.push(0.0);
        } else {
            let spread = z * var.sqrt();
            lower.push((s * (-spread).exp()).clamp(0.0, 1.0));
            upper.push((s * spread.exp()).clamp(0.0, 1.0));
        }
    }
    Ok((
        StepFunction::from_parts_unchecked(table.event_times.clone(), lower, 1.0),
        StepFunction::from_parts_unchecked(table.event_times, upper, 1.0),
    ))
}
