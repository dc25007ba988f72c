//! Survival models for predicting when free-to-play players convert to
//! paying users.
//!
//! The crate covers the whole path from daily player logs to validated
//! predictions:
//!
//! * [`survival`]: time axes, censored records, step functions.
//! * [`estimators`]: Kaplan–Meier, Nelson–Aalen, Aalen–Johansen and
//!   Greenwood confidence bands.
//! * [`cox`]: Cox proportional hazards with Breslow ties.
//! * [`forest`]: random survival forests, conditional inference survival
//!   ensembles and competing-risks forests.
//! * [`pipeline`]: log ingestion, feature engineering and a synthetic log
//!   generator.
//! * [`evaluation`]: stratified splits, RMSLE and confusion rates, reports.
//! * [`model_file`]: the on-disk model format.

pub mod cox;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod forest;
pub mod model;
pub mod model_file;
pub mod pipeline;
pub mod survival;

pub use error::{Error, ErrorCategory, Result};
pub use model::{fit_model, FittedModel, ModelKind, TrainConfig};
pub use model_file::ModelFile;
pub use survival::{EventStatus, StepFunction, SurvivalDataset, SurvivalRecord, TimeAxis};
