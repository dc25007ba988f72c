//! Train/test protocol and validation metrics.
//!
//! A test subject counts as a predicted converter when its predicted curve
//! reaches 0.5 within the training time range. RMSLE is computed over test
//! subjects that both converted and were predicted to convert; both rates use
//! the whole test set as denominator. The false-positive rate counts every
//! observed non-converter that was flagged; on churn-labelled data the
//! stricter rate restricted to churned players is reported alongside.

use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fit_model, FittedModel, ModelKind, TrainConfig};
use crate::pipeline::{build_dataset, filter_newcomers, FeatureSpec, PlayerLog};
use crate::survival::{EventStatus, SurvivalDataset, TimeAxis};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratify_on_converter: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.3,
            stratify_on_converter: true,
            seed: 0,
        }
    }
}

/// Number of training subjects out of `n`; `take(f) + take(1 - f) = n`.
fn take(n: usize, f: f64) -> usize {
    if f <= 0.5 {
        (f * n as f64 + 0.5).floor() as usize
    } else {
        n - take(n, 1.0 - f)
    }
}

/// Training-set membership per record. Within each stratum records are
/// shuffled; fractions up to one half take the front of the shuffle, larger
/// fractions the back, so `f` and `1 - f` give mirrored partitions.
pub fn split_mask(data: &SurvivalDataset, spec: &SplitSpec) -> Result<Vec<bool>> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let converted: Vec<bool> = data
        .records()
        .iter()
        .map(|r| r.status == EventStatus::Converted)
        .collect();
    let strata: Vec<Vec<usize>> = if spec.stratify_on_converter {
        let pos: Vec<usize> = (0..converted.len()).filter(|&i| converted[i]).collect();
        let neg: Vec<usize> = (0..converted.len()).filter(|&i| !converted[i]).collect();
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::Stratification(format!(
                "{} converters and {} non-converters; both classes are needed",
                pos.len(),
                neg.len()
            )));
        }
        vec![pos, neg]
    } else {
        vec![(0..converted.len()).collect()]
    };
    let mut mask = vec![false; converted.len()];
    for (s, mut members) in strata.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(s as u64);
        members.shuffle(&mut rng);
        let k = take(members.len(), spec.train_fraction);
        let chosen = if spec.train_fraction <= 0.5 {
            &members[..k]
        } else {
            &members[members.len() - k..]
        };
        for &i in chosen {
            mask[i] = true;
        }
    }
    Ok(mask)
}

fn apply_mask(data: &SurvivalDataset, mask: &[bool], keep: bool) -> SurvivalDataset {
    let mut i = 0;
    data.filter(|_| {
        let m = mask[i];
        i += 1;
        m == keep
    })
}

/// Stratified train/test partition; records keep their original order.
pub fn stratified_split(
    data: &SurvivalDataset,
    spec: &SplitSpec,
) -> Result<(SurvivalDataset, SurvivalDataset)> {
    let mask = split_mask(data, spec)?;
    Ok((apply_mask(data, &mask, true), apply_mask(data, &mask, false)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub subject_id: String,
    pub observed_time: f64,
    pub observed_converted: bool,
    pub observed_churned: bool,
    pub predicted_median: Option<f64>,
}

impl PredictionOutcome {
    fn scored(&self) -> Option<(f64, f64)> {
        match (self.observed_converted, self.predicted_median) {
            (true, Some(p)) => Some((self.observed_time, p)),
            _ => None,
        }
    }
}

/// Root mean squared difference of `ln(1 + .)` over observed-and-predicted
/// converters.
pub fn rmsle(outcomes: &[PredictionOutcome]) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = outcomes.iter().filter_map(PredictionOutcome::scored).collect();
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric(
            "no subject both converted and was predicted to convert".into(),
        ));
    }
    let sum: f64 = pairs
        .iter()
        .map(|&(o, p)| (p.ln_1p() - o.ln_1p()).powi(2))
        .sum();
    Ok((sum / pairs.len() as f64).sqrt())
}

/// `(false-negative rate, false-positive rate)` over the whole test set.
pub fn confusion_rates(outcomes: &[PredictionOutcome]) -> Result<(f64, f64)> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("no outcomes to score".into()));
    }
    let n = outcomes.len() as f64;
    let fneg = outcomes
        .iter()
        .filter(|o| o.observed_converted && o.predicted_median.is_none())
        .count();
    let fpos = outcomes
        .iter()
        .filter(|o| !o.observed_converted && o.predicted_median.is_some())
        .count();
    Ok((fneg as f64 / n, fpos as f64 / n))
}

/// False positives restricted to players observed to churn.
pub fn churn_false_positive_rate(outcomes: &[PredictionOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("no outcomes to score".into()));
    }
    let k = outcomes
        .iter()
        .filter(|o| o.observed_churned && o.predicted_median.is_some())
        .count();
    Ok(k as f64 / outcomes.len() as f64)
}

pub fn predict_outcomes(model: &FittedModel, test: &SurvivalDataset) -> Result<Vec<PredictionOutcome>> {
    test.records()
        .iter()
        .map(|r| {
            Ok(PredictionOutcome {
                subject_id: r.subject_id.clone(),
                observed_time: r.time,
                observed_converted: r.status == EventStatus::Converted,
                observed_churned: r.status == EventStatus::Churned,
                predicted_median: model.predict_median(&r.covariates)?,
            })
        })
        .collect()
}

/// `(observed, predicted)` pairs for observed-and-predicted converters.
pub fn scatter_pairs(outcomes: &[PredictionOutcome]) -> Vec<(f64, f64)> {
    outcomes.iter().filter_map(PredictionOutcome::scored).collect()
}

/// Scatter CSV: `observed,predicted`, or with `log` the `ln(1 + .)` values
/// under `log1p_observed,log1p_predicted`.
pub fn write_scatter<W: Write>(mut out: W, pairs: &[(f64, f64)], log: bool) -> Result<()> {
    if log {
        writeln!(out, "log1p_observed,log1p_predicted")?;
        for &(o, p) in pairs {
            writeln!(out, "{},{}", o.ln_1p(), p.ln_1p())?;
        }
    } else {
        writeln!(out, "observed,predicted")?;
        for &(o, p) in pairs {
            writeln!(out, "{o},{p}")?;
        }
    }
    Ok(())
}

/// One model on one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub model: ModelKind,
    pub axis: TimeAxis,
    /// Error message when training or prediction failed.
    pub error: Option<String>,
    /// Absent when no subject is both observed and predicted to convert.
    pub rmsle: Option<f64>,
    pub false_negative_rate: Option<f64>,
    pub false_positive_rate: Option<f64>,
    /// Only on churn-labelled test data.
    pub churn_false_positive_rate: Option<f64>,
    pub n_test: usize,
    pub n_converted: usize,
    pub n_predicted_converters: usize,
    pub n_scored: usize,
}

impl ReportCell {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub train_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub models: Vec<ModelKind>,
    pub axes: Vec<TimeAxis>,
    pub cells: Vec<ReportCell>,
}

impl EvaluationReport {
    pub fn cell(&self, model: ModelKind, axis: TimeAxis) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.model == model && c.axis == axis)
    }

    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(ReportCell::failed)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Aligned table: RMSLE, false negatives and false positives, each
    /// broken down by axis.
    pub fn to_text(&self) -> String {
        let w = 10;
        let groups = ["RMSLE", "False negatives", "False positives"];
        let group_width = self.axes.len() * (w + 1);
        let mut s = String::new();
        let _ = write!(s, "{:<8}", "");
        for g in groups {
            let _ = write!(s, "|{g:^group_width$}");
        }
        s.push('\n');
        let _ = write!(s, "{:<8}", "model");
        for _ in groups {
            s.push('|');
            for a in &self.axes {
                let _ = write!(s, "{:>w$} ", a.as_str());
            }
        }
        s.push('\n');
        s.push_str(&"-".repeat(8 + 3 * (group_width + 1)));
        s.push('\n');
        for &m in &self.models {
            let _ = write!(s, "{:<8}", m.as_str());
            for g in 0..3 {
                s.push('|');
                for &a in &self.axes {
                    let text = match self.cell(m, a) {
                        None => "-".to_string(),
                        Some(c) if c.failed() => "failed".to_string(),
                        Some(c) => {
                            let v = [c.rmsle, c.false_negative_rate, c.false_positive_rate][g];
                            match (g, v) {
                                (_, None) => "n/a".to_string(),
                                (0, Some(v)) => format!("{v:.4}"),
                                (_, Some(v)) => format!("{:.2}%", 100.0 * v),
                            }
                        }
                    };
                    let _ = write!(s, "{text:>w$} ");
                }
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "\nseed {}, train fraction {}, {} training / {} test players",
            self.seed, self.train_fraction, self.n_train, self.n_test
        );
        s.push_str(
            "RMSLE over observed and predicted converters; rates over the whole test set.\n",
        );
        for c in self.cells.iter().filter(|c| c.failed()) {
            let _ = writeln!(
                s,
                "{} on {} failed: {}",
                c.model,
                c.axis,
                c.error.as_deref().unwrap_or_default()
            );
        }
        s
    }
}

/// A cell plus its scatter data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    pub cell: ReportCell,
    pub scatter: Vec<(f64, f64)>,
}

fn evaluate_one(
    kind: ModelKind,
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    cfg: &TrainConfig,
) -> Result<(ReportCell, Vec<(f64, f64)>)> {
    let model = fit_model(kind, train, cfg)?;
    let outcomes = predict_outcomes(&model, test)?;
    let (fneg, fpos) = confusion_rates(&outcomes)?;
    let scatter = scatter_pairs(&outcomes);
    let cell = ReportCell {
        model: kind,
        axis: test.axis(),
        error: None,
        rmsle: rmsle(&outcomes).ok(),
        false_negative_rate: Some(fneg),
        false_positive_rate: Some(fpos),
        churn_false_positive_rate: if test.competing_risks() {
            Some(churn_false_positive_rate(&outcomes)?)
        } else {
            None
        },
        n_test: outcomes.len(),
        n_converted: outcomes.iter().filter(|o| o.observed_converted).count(),
        n_predicted_converters: outcomes.iter().filter(|o| o.predicted_median.is_some()).count(),
        n_scored: scatter.len(),
    };
    Ok((cell, scatter))
}

/// Fit each model on `train` and score it on `test`. A failing model yields
/// a cell carrying its error; the others are unaffected.
pub fn evaluate_models(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    kinds: &[ModelKind],
    cfg: &TrainConfig,
) -> Result<Vec<ModelEvaluation>> {
    if train.axis() != test.axis() || train.feature_names() != test.feature_names() {
        return Err(Error::Compatibility(
            "train and test sets differ in axis or features".into(),
        ));
    }
    Ok(kinds
        .iter()
        .map(|&kind| match evaluate_one(kind, train, test, cfg) {
            Ok((cell, scatter)) => ModelEvaluation { cell, scatter },
            Err(e) => ModelEvaluation {
                cell: ReportCell {
                    model: kind,
                    axis: test.axis(),
                    error: Some(e.to_string()),
                    rmsle: None,
                    false_negative_rate: None,
                    false_positive_rate: None,
                    churn_false_positive_rate: None,
                    n_test: test.len(),
                    n_converted: test.count_status(EventStatus::Converted),
                    n_predicted_converters: 0,
                    n_scored: 0,
                },
                scatter: Vec::new(),
            },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub models: Vec<ModelKind>,
    pub axes: Vec<TimeAxis>,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub features: FeatureSpec,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            axes: TimeAxis::ALL.to_vec(),
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            features: FeatureSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub report: EvaluationReport,
    /// `(model, axis, observed/predicted pairs)` in report order.
    pub scatter: Vec<(ModelKind, TimeAxis, Vec<(f64, f64)>)>,
}

/// Full protocol on raw logs: newcomer filter, churn-labelled datasets on
/// each axis, one stratified split shared by all axes, then every model on
/// every axis.
pub fn run_benchmark(logs: &[PlayerLog], cfg: &BenchmarkConfig) -> Result<BenchmarkResult> {
    let kept = filter_newcomers(logs.to_vec());
    if kept.is_empty() {
        return Err(Error::EmptyInput("no player with two or more active days".into()));
    }
    let mut mask = None;
    let mut cells = Vec::new();
    let mut scatter = Vec::new();
    let mut sizes = (0, 0);
    let mut per_axis = Vec::new();
    for &axis in &cfg.axes {
        let data = build_dataset(&kept, axis, true, &cfg.features)?;
        let m = match &mask {
            Some(m) => m,
            None => mask.insert(split_mask(&data, &cfg.split)?),
        };
        let train = apply_mask(&data, m, true);
        let test = apply_mask(&data, m, false);
        sizes = (train.len(), test.len());
        per_axis.push(evaluate_models(&train, &test, &cfg.models, &cfg.train)?);
    }
    for &model in &cfg.models {
        for (a, &axis) in cfg.axes.iter().enumerate() {
            let ev = per_axis[a]
                .iter()
                .find(|e| e.cell.model == model)
                .expect("one evaluation per model");
            cells.push(ev.cell.clone());
            scatter.push((model, axis, ev.scatter.clone()));
        }
    }
    Ok(BenchmarkResult {
        report: EvaluationReport {
            seed: cfg.split.seed,
            train_fraction: cfg.split.train_fraction,
            n_train: sizes.0,
            n_test: sizes.1,
            models: cfg.models.clone(),
            axes: cfg.axes.clone(),
            cells,
        },
        scatter,
    })
}
