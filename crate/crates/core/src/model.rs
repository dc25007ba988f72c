//! One interface over the four model kinds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cox::{fit_cox, predict_cox_median, predict_cox_survival, CoxFit, CoxOptions};
use crate::error::{Error, Result};
use crate::forest::{
    fit_conditional_ensemble, fit_rsf, fit_rsf_competing, predict_forest_incidence,
    predict_forest_median, predict_forest_survival, ForestConfig, ForestModel,
};
use crate::survival::{EventStatus, StepFunction, SurvivalDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "cox")]
    Cox,
    #[serde(rename = "rsf")]
    Rsf,
    #[serde(rename = "cif")]
    Cif,
    #[serde(rename = "rsf-cr")]
    RsfCr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Cox, ModelKind::Rsf, ModelKind::Cif, ModelKind::RsfCr];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cox => "cox",
            ModelKind::Rsf => "rsf",
            ModelKind::Cif => "cif",
            ModelKind::RsfCr => "rsf-cr",
        }
    }

    /// Whether the model is trained on churn-labelled data.
    pub fn competing(self) -> bool {
        self == ModelKind::RsfCr
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!("unknown model `{s}` (expected cox, rsf, cif or rsf-cr)"))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainConfig {
    pub forest: ForestConfig,
    pub cox: CoxOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "fit", rename_all = "lowercase")]
pub enum FittedModel {
    Cox(CoxFit),
    Forest(ForestModel),
}

/// Fit `kind` on `data`. Competing-risks data is reduced to conversion
/// versus censoring for the single-risk kinds.
pub fn fit_model(kind: ModelKind, data: &SurvivalDataset, cfg: &TrainConfig) -> Result<FittedModel> {
    if kind.competing() {
        return Ok(FittedModel::Forest(fit_rsf_competing(data, &cfg.forest)?));
    }
    let single;
    let data = if data.competing_risks() {
        single = data.to_single_risk();
        &single
    } else {
        data
    };
    Ok(match kind {
        ModelKind::Cox => FittedModel::Cox(fit_cox(data, &cfg.cox)?),
        ModelKind::Rsf => FittedModel::Forest(fit_rsf(data, &cfg.forest)?),
        ModelKind::Cif => FittedModel::Forest(fit_conditional_ensemble(data, &cfg.forest)?),
        ModelKind::RsfCr => unreachable!(),
    })
}

impl FittedModel {
    pub fn feature_names(&self) -> &[String] {
        match self {
            FittedModel::Cox(f) => &f.feature_names,
            FittedModel::Forest(m) => &m.feature_names,
        }
    }

    /// Predicted conversion time, `None` for a predicted non-converter.
    pub fn predict_median(&self, x: &[f64]) -> Result<Option<f64>> {
        match self {
            FittedModel::Cox(f) => predict_cox_median(f, x),
            FittedModel::Forest(m) => predict_forest_median(m, x),
        }
    }

    /// Survival curve, or the conversion incidence for competing-risks models.
    pub fn predict_curve(&self, x: &[f64]) -> Result<StepFunction> {
        match self {
            FittedModel::Cox(f) => predict_cox_survival(f, x),
            FittedModel::Forest(m) if m.kind == crate::forest::ForestKind::RsfCompeting => {
                predict_forest_incidence(m, x, EventStatus::Converted)
            }
            FittedModel::Forest(m) => predict_forest_survival(m, x),
        }
    }
}
