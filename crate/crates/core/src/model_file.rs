//! Versioned JSON container for fitted models.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "kind": "rsf",                      // cox | rsf | cif | rsf-cr
//!   "axis": "lifetime",                 // lifetime | level | playtime
//!   "feature_names": ["mean_playtime", ...],
//!   "feature_spec_hash": "9c0e...",     // see pipeline::feature_spec_hash
//!   "churn_window": 9,                  // null unless trained on churn labels
//!   "config": { "forest": {...}, "cox": {...} },
//!   "model": { "kind": "cox" | "forest", "fit": {...} }
//! }
//! ```
//!
//! Cox fits store coefficients and the Breslow baseline cumulative hazard as
//! knots and values. Forests store every tree as a node array (`split` nodes
//! with feature index, threshold and child indices; `leaf` nodes with their
//! risk table). Floats are written with round-trip precision, so a loaded
//! model predicts bit-identically to the saved one.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ForestKind;
use crate::model::{FittedModel, ModelKind, TrainConfig};
use crate::pipeline::feature_spec_hash;
use crate::survival::TimeAxis;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub kind: ModelKind,
    pub axis: TimeAxis,
    pub feature_names: Vec<String>,
    pub feature_spec_hash: String,
    pub churn_window: Option<u32>,
    pub config: TrainConfig,
    pub model: FittedModel,
}

#[derive(Deserialize)]
struct Version {
    format_version: u32,
}

impl ModelFile {
    pub fn new(
        kind: ModelKind,
        axis: TimeAxis,
        config: TrainConfig,
        churn_window: Option<u32>,
        model: FittedModel,
    ) -> Result<Self> {
        let feature_names = model.feature_names().to_vec();
        let file = Self {
            format_version: FORMAT_VERSION,
            kind,
            axis,
            feature_spec_hash: feature_spec_hash(&feature_names),
            feature_names,
            churn_window,
            config,
            model,
        };
        file.validate()?;
        Ok(file)
    }

    fn validate(&self) -> Result<()> {
        let p = self.feature_names.len();
        if self.feature_spec_hash != feature_spec_hash(&self.feature_names) {
            return Err(Error::InvalidModel(
                "feature_spec_hash does not match the feature names".into(),
            ));
        }
        if self.model.feature_names() != self.feature_names.as_slice() {
            return Err(Error::InvalidModel(
                "model and file disagree on feature names".into(),
            ));
        }
        match (&self.model, self.kind) {
            (FittedModel::Cox(fit), ModelKind::Cox) => {
                let bad_reference = !(fit.reference.is_empty() || fit.reference.len() == p)
                    || fit.reference.iter().any(|v| !v.is_finite());
                if fit.beta.len() != p || fit.beta.iter().any(|b| !b.is_finite()) || bad_reference {
                    return Err(Error::InvalidModel("bad Cox coefficients".into()));
                }
                if !fit.baseline_cum_hazard.is_valid_cumulative_hazard() {
                    return Err(Error::InvalidModel("bad baseline cumulative hazard".into()));
                }
            }
            (FittedModel::Forest(m), kind) => {
                let expected = match kind {
                    ModelKind::Rsf => ForestKind::Rsf,
                    ModelKind::Cif => ForestKind::ConditionalEnsemble,
                    ModelKind::RsfCr => ForestKind::RsfCompeting,
                    ModelKind::Cox => {
                        return Err(Error::InvalidModel("cox file holds a forest".into()))
                    }
                };
                if m.kind != expected || m.axis != self.axis {
                    return Err(Error::InvalidModel(format!(
                        "{kind} file holds a {} forest on the {} axis",
                        m.kind, m.axis
                    )));
                }
            }
            (FittedModel::Cox(_), kind) => {
                return Err(Error::InvalidModel(format!("{kind} file holds a Cox fit")))
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parse and validate; the version is checked before anything else.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Version = serde_json::from_str(text)
            .map_err(|e| Error::InvalidModel(format!("not a model file: {e}")))?;
        if v.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: v.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidModel(format!("malformed model file: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Fail unless `names` is the layout the model was trained on.
    pub fn check_features(&self, names: &[String]) -> Result<()> {
        let hash = feature_spec_hash(names);
        if hash != self.feature_spec_hash {
            return Err(Error::Compatibility(format!(
                "feature spec hash {hash} differs from the model's {}",
                self.feature_spec_hash
            )));
        }
        Ok(())
    }
}
