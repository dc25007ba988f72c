//! Survival ensembles: random survival forests, conditional inference
//! survival ensembles and competing-risks random survival forests, grown on a
//! shared tree chassis.
//!
//! Prediction semantics per kind:
//!
//! * RSF: `S(t|x) = exp(-(1/N) sum_n H_n(t, x))` with `H_n` the Nelson–Aalen
//!   estimate in the leaf of tree `n` reached by `x`.
//! * Conditional ensemble: Kaplan–Meier with counts pooled over the leaves
//!   reached by `x` (`Aggregation::Pooled`), or the mean of per-tree leaf
//!   Kaplan–Meier curves (`Aggregation::Mean`).
//! * Competing-risks RSF: per-leaf Aalen–Johansen cumulative incidence built
//!   from the event-specific Nelson–Aalen increments and the all-cause
//!   survival, averaged over trees.
//!
//! Trees are grown in parallel on the current rayon pool. Every tree draws
//! from its own RNG stream derived from `(seed, tree index)`, so fitted
//! forests do not depend on the number of worker threads.

mod split;
mod tree;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::RiskTable;
use crate::survival::{median_crossing, EventStatus, StepFunction, SurvivalDataset, TimeAxis};

pub use tree::{Leaf, Node, Tree};

use split::GrowData;
use tree::{draw_sample, fnv1a, sample_features, splitmix64, tree_seed, Grower};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForestKind {
    Rsf,
    ConditionalEnsemble,
    RsfCompeting,
}

impl fmt::Display for ForestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForestKind::Rsf => "rsf",
            ForestKind::ConditionalEnsemble => "conditional-ensemble",
            ForestKind::RsfCompeting => "rsf-competing",
        })
    }
}

/// How conditional-ensemble trees are combined at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Event and at-risk counts summed over trees inside one product-limit.
    Pooled,
    /// Pointwise mean of per-tree Kaplan–Meier curves.
    Mean,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Aggregation::Pooled),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::Config(format!(
                "unknown aggregation `{other}` (expected pooled or mean)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per node; `None` means `ceil(sqrt(p))`.
    pub mtry: Option<usize>,
    /// Minimum number of events in each daughter node.
    pub min_node_events: usize,
    pub bootstrap: bool,
    /// Bootstrap sample size as a fraction of `n`.
    pub sample_fraction: f64,
    /// Split significance level for conditional inference trees.
    pub alpha: f64,
    pub max_depth: Option<usize>,
    pub seed: u64,
    /// Cap on candidate cutpoints per feature and node.
    pub max_cutpoints: usize,
    pub aggregation: Aggregation,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 900,
            mtry: None,
            min_node_events: 15,
            bootstrap: true,
            sample_fraction: 1.0,
            alpha: 0.05,
            max_depth: None,
            seed: 0,
            max_cutpoints: 64,
            aggregation: Aggregation::Pooled,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
            .min(p)
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be positive".into()));
        }
        if self.min_node_events == 0 {
            return Err(Error::Config("min_node_events must be positive".into()));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > p {
                return Err(Error::Config(format!(
                    "mtry {m} must be between 1 and the feature count {p}"
                )));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "sample fraction {} outside (0, 1]",
                self.sample_fraction
            )));
        }
        if self.max_cutpoints == 0 {
            return Err(Error::Config("max_cutpoints must be positive".into()));
        }
        Ok(())
    }
}

// Curve columns cached per leaf.
const COL_HAZARD: usize = 0; // RSF
const COL_KM: usize = 0; // conditional ensemble
const CR_SURV: usize = 0;
const CR_CIF_CONV: usize = 1;
const CR_CIF_CHURN: usize = 2;
const CR_HAZ_CONV: usize = 3;
const CR_HAZ_CHURN: usize = 4;

#[derive(Debug, Clone, Default)]
struct LeafCurves {
    /// Knot positions as indices into the forest time grid.
    knots: Vec<u32>,
    columns: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
struct ForestCache {
    grid: Vec<f64>,
    /// `[tree][node]`, `None` for split nodes.
    leaves: Vec<Vec<Option<LeafCurves>>>,
}

fn left_values(kind: ForestKind) -> &'static [f64] {
    match kind {
        ForestKind::Rsf => &[0.0],
        ForestKind::ConditionalEnsemble => &[1.0],
        ForestKind::RsfCompeting => &[1.0, 0.0, 0.0, 0.0, 0.0],
    }
}

fn leaf_columns(kind: ForestKind, table: &RiskTable) -> Vec<Vec<f64>> {
    let take = |f: StepFunction| f.values().to_vec();
    match kind {
        ForestKind::Rsf => vec![take(table.nelson_aalen())],
        ForestKind::ConditionalEnsemble => vec![take(table.kaplan_meier())],
        ForestKind::RsfCompeting => vec![
            take(table.kaplan_meier()),
            take(table.cumulative_incidence(EventStatus::Converted)),
            take(table.cumulative_incidence(EventStatus::Churned)),
            take(table.cause_specific_hazard(EventStatus::Converted)),
            take(table.cause_specific_hazard(EventStatus::Churned)),
        ],
    }
}

impl ForestCache {
    fn build(kind: ForestKind, trees: &[Tree]) -> Self {
        let mut grid: Vec<f64> = trees
            .iter()
            .flat_map(|t| t.leaves())
            .flat_map(|l| l.table.event_times.iter().copied())
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let leaves = trees
            .iter()
            .map(|t| {
                t.nodes
                    .iter()
                    .map(|n| match n {
                        Node::Leaf(l) => Some(LeafCurves {
                            knots: l
                                .table
                                .event_times
                                .iter()
                                .map(|&e| grid.partition_point(|&g| g < e) as u32)
                                .collect(),
                            columns: leaf_columns(kind, &l.table),
                        }),
                        Node::Split { .. } => None,
                    })
                    .collect()
            })
            .collect();
        ForestCache { grid, leaves }
    }
}

/// Serialized form of [`ForestModel`]; the prediction cache is rebuilt on load.
#[derive(Deserialize)]
struct ForestRepr {
    kind: ForestKind,
    trees: Vec<Tree>,
    config: ForestConfig,
    feature_names: Vec<String>,
    axis: TimeAxis,
    #[serde(default)]
    training: Vec<(f64, EventStatus)>,
}

impl TryFrom<ForestRepr> for ForestModel {
    type Error = Error;

    fn try_from(r: ForestRepr) -> Result<Self> {
        ForestModel::from_parts(r.kind, r.trees, r.config, r.feature_names, r.axis, r.training)
    }
}

/// A fitted survival ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ForestRepr")]
pub struct ForestModel {
    pub kind: ForestKind,
    pub trees: Vec<Tree>,
    pub config: ForestConfig,
    pub feature_names: Vec<String>,
    pub axis: TimeAxis,
    /// Training observations in (time, events-first) order. Leaf members
    /// index into this list; empty unless pooled aggregation needs it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub training: Vec<(f64, EventStatus)>,
    #[serde(skip)]
    cache: ForestCache,
}

impl PartialEq for ForestModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.trees == other.trees
            && self.config == other.config
            && self.feature_names == other.feature_names
            && self.axis == other.axis
            && self.training == other.training
    }
}

impl ForestModel {
    /// Assemble a model from already-built trees (hand-made models, tests).
    pub fn from_parts(
        kind: ForestKind,
        trees: Vec<Tree>,
        config: ForestConfig,
        feature_names: Vec<String>,
        axis: TimeAxis,
        training: Vec<(f64, EventStatus)>,
    ) -> Result<Self> {
        let p = feature_names.len();
        if trees.is_empty() {
            return Err(Error::InvalidModel("forest without trees".into()));
        }
        for tree in &trees {
            if tree.nodes.is_empty() {
                return Err(Error::InvalidModel("tree without nodes".into()));
            }
            for node in &tree.nodes {
                match node {
                    Node::Split {
                        feature,
                        left,
                        right,
                        ..
                    } => {
                        let n = tree.nodes.len() as u32;
                        if *feature >= p || *left >= n || *right >= n {
                            return Err(Error::InvalidModel("split refers outside the model".into()));
                        }
                    }
                    Node::Leaf(l) => {
                        if l.members.iter().any(|&(i, _)| i as usize >= training.len()) {
                            return Err(Error::InvalidModel(
                                "leaf member outside the training set".into(),
                            ));
                        }
                        if !valid_table(&l.table) {
                            return Err(Error::InvalidModel("inconsistent leaf risk table".into()));
                        }
                    }
                }
            }
            if !acyclic(tree) {
                return Err(Error::InvalidModel("tree nodes do not form a tree".into()));
            }
        }
        if kind == ForestKind::ConditionalEnsemble
            && config.aggregation == Aggregation::Pooled
            && trees.iter().flat_map(|t| t.leaves()).any(|l| l.members.is_empty())
        {
            return Err(Error::InvalidModel(
                "pooled aggregation needs leaf membership".into(),
            ));
        }
        let cache = ForestCache::build(kind, &trees);
        Ok(Self {
            kind,
            trees,
            config,
            feature_names,
            axis,
            training,
            cache,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    fn check_shape(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_names.len() {
            return Err(Error::Shape {
                expected: self.feature_names.len(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Tree-averaged curve column: knots are the union of the leaf knots
    /// reached by `x`.
    fn ensemble_mean(&self, x: &[f64], col: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let g = self.cache.grid.len();
        let mut incr = vec![0.0; g];
        let mut touched = vec![false; g];
        let left = left_values(self.kind)[col];
        for (t, tree) in self.trees.iter().enumerate() {
            let leaf = self.cache.leaves[t][tree.leaf_index(x)]
                .as_ref()
                .expect("leaf cache");
            let mut prev = left;
            for (&k, &v) in leaf.knots.iter().zip(&leaf.columns[col]) {
                incr[k as usize] += v - prev;
                touched[k as usize] = true;
                prev = v;
            }
        }
        let n = self.trees.len() as f64;
        let mut knots = Vec::new();
        let mut values = Vec::new();
        let mut acc = 0.0;
        for k in 0..g {
            acc += incr[k];
            if touched[k] {
                knots.push(self.cache.grid[k]);
                values.push(left + acc / n);
            }
        }
        (knots, values, left)
    }

    fn pooled_kaplan_meier(&self, x: &[f64]) -> StepFunction {
        let mut w = vec![0.0f64; self.training.len()];
        for tree in &self.trees {
            for &(i, c) in &tree.leaf(x).members {
                w[i as usize] += f64::from(c);
            }
        }
        let mut remaining: f64 = w.iter().sum();
        let mut s = 1.0;
        let mut knots = Vec::new();
        let mut values = Vec::new();
        let obs = &self.training;
        let mut a = 0;
        while a < obs.len() {
            let t = obs[a].0;
            let (mut d, mut out) = (0.0, 0.0);
            let mut b = a;
            while b < obs.len() && obs[b].0 == t {
                if obs[b].1.is_event() {
                    d += w[b];
                }
                out += w[b];
                b += 1;
            }
            if d > 0.0 {
                s *= 1.0 - d / remaining;
                knots.push(t);
                values.push(s);
            }
            remaining -= out;
            a = b;
        }
        StepFunction::from_parts_unchecked(knots, values, 1.0)
    }
}

fn valid_table(t: &RiskTable) -> bool {
    let k = t.event_times.len();
    t.at_risk.len() == k
        && t.converted.len() == k
        && t.churned.len() == k
        && t.censored.len() == k
        && t.event_times.windows(2).all(|w| w[0] < w[1])
        && t.event_times.iter().all(|v| v.is_finite())
        && (0..k).all(|i| {
            let d = u64::from(t.converted[i]) + u64::from(t.churned[i]);
            d > 0 && d <= u64::from(t.at_risk[i])
        })
        && t.at_risk.windows(2).zip(0..).all(|(w, i)| {
            u64::from(w[1])
                <= u64::from(w[0])
                    .saturating_sub(u64::from(t.converted[i]) + u64::from(t.churned[i]))
        })
}

fn acyclic(tree: &Tree) -> bool {
    let n = tree.nodes.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        if seen[i] {
            return false;
        }
        seen[i] = true;
        if let Node::Split { left, right, .. } = &tree.nodes[i] {
            stack.push(*left as usize);
            stack.push(*right as usize);
        }
    }
    true
}

fn clamp_unit(values: Vec<f64>) -> Vec<f64> {
    values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

struct Prepared {
    grow: GrowData,
    training: Vec<(f64, EventStatus)>,
}

/// Records sorted by (time, events first, original order) so that leaf
/// member indices address the stored training list directly.
fn prepare(data: &SurvivalDataset, kind: ForestKind) -> Prepared {
    let recs = data.records();
    let mut order: Vec<usize> = (0..recs.len()).collect();
    order.sort_by(|&a, &b| {
        recs[a]
            .time
            .total_cmp(&recs[b].time)
            .then(recs[a].status.tie_rank().cmp(&recs[b].status.tie_rank()))
            .then(a.cmp(&b))
    });
    let p = data.n_features();
    let columns = (0..p)
        .map(|f| order.iter().map(|&i| recs[i].covariates[f]).collect())
        .collect();
    let times: Vec<f64> = order.iter().map(|&i| recs[i].time).collect();
    let status: Vec<EventStatus> = order.iter().map(|&i| recs[i].status).collect();
    let stat_event = status
        .iter()
        .map(|s| match kind {
            ForestKind::RsfCompeting => *s == EventStatus::Converted,
            _ => s.is_event(),
        })
        .collect();
    let keys = data
        .feature_names()
        .iter()
        .map(|n| fnv1a(n.as_bytes()))
        .collect();
    let training = times.iter().copied().zip(status.iter().copied()).collect();
    Prepared {
        grow: GrowData::new(columns, times, status, keys, stat_event),
        training,
    }
}

fn check_data(data: &SurvivalDataset, kind: ForestKind, cfg: &ForestConfig) -> Result<()> {
    cfg.validate(data.n_features())?;
    match kind {
        ForestKind::RsfCompeting => {
            if !data.competing_risks() {
                return Err(Error::Config(
                    "competing-risks forest needs a dataset with churn labels".into(),
                ));
            }
            for ev in [EventStatus::Converted, EventStatus::Churned] {
                if data.count_status(ev) == 0 {
                    return Err(Error::DegenerateFit(format!(
                        "no {ev:?} events in the competing-risks training data"
                    )));
                }
            }
        }
        _ => {
            if data.competing_risks() {
                return Err(Error::Config(format!(
                    "{kind} needs a single-risk dataset"
                )));
            }
        }
    }
    let events = data.records().iter().filter(|r| r.status.is_event()).count();
    if events == 0 || events < cfg.min_node_events {
        return Err(Error::DegenerateFit(format!(
            "{events} events, fewer than min_node_events = {}",
            cfg.min_node_events
        )));
    }
    Ok(())
}

fn fit_forest(data: &SurvivalDataset, cfg: &ForestConfig, kind: ForestKind) -> Result<ForestModel> {
    check_data(data, kind, cfg)?;
    let prepared = prepare(data, kind);
    let keep_members =
        kind == ForestKind::ConditionalEnsemble && cfg.aggregation == Aggregation::Pooled;
    let grower = Grower {
        data: &prepared.grow,
        cfg,
        kind,
        mtry: cfg.resolved_mtry(data.n_features()),
        keep_members,
    };
    let n = data.len();
    let trees: Vec<Tree> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let seed = tree_seed(cfg.seed, t);
            let sample = draw_sample(n, cfg, splitmix64(seed ^ 0xB007));
            grower.grow(sample, seed)
        })
        .collect();
    let training = if keep_members {
        prepared.training
    } else {
        Vec::new()
    };
    let cache = ForestCache::build(kind, &trees);
    Ok(ForestModel {
        kind,
        trees,
        config: cfg.clone(),
        feature_names: data.feature_names().to_vec(),
        axis: data.axis(),
        training,
        cache,
    })
}

/// Random survival forest with log-rank splitting and Nelson–Aalen leaves.
pub fn fit_rsf(data: &SurvivalDataset, cfg: &ForestConfig) -> Result<ForestModel> {
    fit_forest(data, cfg, ForestKind::Rsf)
}

/// Conditional inference survival ensemble: permutation-test variable
/// selection with Bonferroni stopping at `alpha`, then the cutpoint with the
/// largest two-sample linear statistic; Kaplan–Meier leaves.
pub fn fit_conditional_ensemble(data: &SurvivalDataset, cfg: &ForestConfig) -> Result<ForestModel> {
    fit_forest(data, cfg, ForestKind::ConditionalEnsemble)
}

/// Competing-risks forest split on the cause-specific log-rank statistic for
/// conversion (churn treated as censoring within the statistic).
pub fn fit_rsf_competing(data: &SurvivalDataset, cfg: &ForestConfig) -> Result<ForestModel> {
    fit_forest(data, cfg, ForestKind::RsfCompeting)
}

/// Root-node feature choice on the full sample (no bootstrap). For
/// conditional ensembles this is the variable-selection step regardless of
/// whether its p-value would permit the split.
pub fn root_split_feature(
    data: &SurvivalDataset,
    cfg: &ForestConfig,
    kind: ForestKind,
) -> Result<Option<usize>> {
    cfg.validate(data.n_features())?;
    let prepared = prepare(data, kind);
    let g = &prepared.grow;
    let idx: Vec<u32> = (0..data.len() as u32).collect();
    let features = sample_features(
        g,
        splitmix64(tree_seed(cfg.seed, 0) ^ 1),
        cfg.resolved_mtry(data.n_features()),
    );
    Ok(match kind {
        ForestKind::ConditionalEnsemble => {
            let scores = split::logrank_scores(g, &idx);
            split::select_feature(g, &idx, &scores, &features).map(|a| a.feature)
        }
        _ => split::best_logrank_split(g, &idx, &features, cfg.min_node_events, cfg.max_cutpoints)
            .map(|s| s.feature),
    })
}

/// Ensemble survival curve (all-cause for competing-risks models).
pub fn predict_forest_survival(model: &ForestModel, x: &[f64]) -> Result<StepFunction> {
    model.check_shape(x)?;
    Ok(match model.kind {
        ForestKind::Rsf => {
            let (k, h, _) = model.ensemble_mean(x, COL_HAZARD);
            StepFunction::from_parts_unchecked(k, h.iter().map(|h| (-h).exp()).collect(), 1.0)
        }
        ForestKind::ConditionalEnsemble => match model.config.aggregation {
            Aggregation::Pooled => model.pooled_kaplan_meier(x),
            Aggregation::Mean => {
                let (k, s, _) = model.ensemble_mean(x, COL_KM);
                StepFunction::from_parts_unchecked(k, clamp_unit(s), 1.0)
            }
        },
        ForestKind::RsfCompeting => {
            let (k, s, _) = model.ensemble_mean(x, CR_SURV);
            StepFunction::from_parts_unchecked(k, clamp_unit(s), 1.0)
        }
    })
}

/// Ensemble cumulative incidence of `event` for a competing-risks model.
pub fn predict_forest_incidence(
    model: &ForestModel,
    x: &[f64],
    event: EventStatus,
) -> Result<StepFunction> {
    if model.kind != ForestKind::RsfCompeting {
        return Err(Error::InvalidModel(format!(
            "cumulative incidence needs a competing-risks model, got {}",
            model.kind
        )));
    }
    let col = match event {
        EventStatus::Converted => CR_CIF_CONV,
        EventStatus::Churned => CR_CIF_CHURN,
        EventStatus::Censored => {
            return Err(Error::InvalidEvent("censoring is not an event type".into()))
        }
    };
    model.check_shape(x)?;
    let (k, c, _) = model.ensemble_mean(x, col);
    Ok(StepFunction::from_parts_unchecked(k, clamp_unit(c), 0.0))
}

/// Tree-averaged Nelson–Aalen cumulative hazard: all-cause for RSF,
/// event-specific for competing-risks models.
pub fn predict_forest_cumulative_hazard(
    model: &ForestModel,
    x: &[f64],
    event: EventStatus,
) -> Result<StepFunction> {
    model.check_shape(x)?;
    let col = match (model.kind, event) {
        (ForestKind::Rsf, EventStatus::Converted) => COL_HAZARD,
        (ForestKind::RsfCompeting, EventStatus::Converted) => CR_HAZ_CONV,
        (ForestKind::RsfCompeting, EventStatus::Churned) => CR_HAZ_CHURN,
        (ForestKind::ConditionalEnsemble, _) => {
            return Err(Error::InvalidModel(
                "conditional ensembles store Kaplan–Meier leaves, not hazards".into(),
            ))
        }
        (_, ev) => return Err(Error::InvalidEvent(format!("{ev:?} for a {} model", model.kind))),
    };
    let (k, h, _) = model.ensemble_mean(x, col);
    Ok(StepFunction::from_parts_unchecked(k, h, 0.0))
}

/// Predicted conversion "time": where survival drops to 0.5, or for
/// competing-risks models where conversion incidence reaches 0.5.
pub fn predict_forest_median(model: &ForestModel, x: &[f64]) -> Result<Option<f64>> {
    let curve = match model.kind {
        ForestKind::RsfCompeting => predict_forest_incidence(model, x, EventStatus::Converted)?,
        _ => predict_forest_survival(model, x)?,
    };
    median_crossing(&curve, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{aalen_johansen, kaplan_meier, nelson_aalen};
    use crate::survival::SurvivalRecord;
    use EventStatus::*;

    fn table(rows: &[(f64, u32, u32)]) -> RiskTable {
        // (time, at risk, conversions)
        RiskTable {
            event_times: rows.iter().map(|r| r.0).collect(),
            at_risk: rows.iter().map(|r| r.1).collect(),
            converted: rows.iter().map(|r| r.2).collect(),
            churned: vec![0; rows.len()],
            censored: vec![0; rows.len()],
            censored_before: 0,
        }
    }

    fn stump(t: RiskTable) -> Tree {
        Tree {
            nodes: vec![Node::Leaf(Leaf {
                table: t,
                members: vec![],
            })],
        }
    }

    fn three_events() -> SurvivalDataset {
        let recs = (1..=3)
            .map(|i| SurvivalRecord::new(format!("s{i}"), f64::from(i), Converted, vec![0.0]))
            .collect();
        SurvivalDataset::new(recs, vec!["x".into()], TimeAxis::Lifetime, false).unwrap()
    }

    fn stump_cfg(n: usize) -> ForestConfig {
        ForestConfig {
            n_trees: 1,
            bootstrap: false,
            min_node_events: n,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn two_tree_handmade_rsf() {
        // Leaf hazards 0.2 t and 0.4 t at integer knots.
        let a = table(&[(1.0, 10, 2), (2.0, 5, 1)]);
        let b = table(&[(1.0, 10, 4), (2.0, 5, 2)]);
        let m = ForestModel::from_parts(
            ForestKind::Rsf,
            vec![stump(a), stump(b)],
            ForestConfig::default(),
            vec!["x".into()],
            TimeAxis::Lifetime,
            vec![],
        )
        .unwrap();
        let s = predict_forest_survival(&m, &[0.0]).unwrap();
        assert!((s.evaluate(1.0) - (-0.3f64).exp()).abs() < 1e-15);
        assert!((s.evaluate(2.0) - (-0.6f64).exp()).abs() < 1e-15);
        assert_eq!(s.evaluate(0.5), 1.0);
    }

    #[test]
    fn single_tree_reduces_to_leaf_curve() {
        let t = table(&[(1.0, 4, 1), (3.0, 2, 1)]);
        let m = ForestModel::from_parts(
            ForestKind::Rsf,
            vec![stump(t.clone())],
            ForestConfig::default(),
            vec!["x".into()],
            TimeAxis::Lifetime,
            vec![],
        )
        .unwrap();
        let s = predict_forest_survival(&m, &[1.0]).unwrap();
        let h = t.nelson_aalen();
        for &k in h.knots() {
            assert!((s.evaluate(k) - (-h.evaluate(k)).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn stump_rsf_median_uses_exp_minus_nelson_aalen() {
        let d = three_events();
        let m = fit_rsf(&d, &stump_cfg(3)).unwrap();
        let na = nelson_aalen(&d).unwrap();
        let expected = median_crossing(&na.map_values(|h| (-h).exp()), 0.5).unwrap();
        // exp(-1/3) = 0.72, exp(-5/6) = 0.43: crosses at t = 2.
        assert_eq!(expected, Some(2.0));
        assert_eq!(predict_forest_median(&m, &[0.0]).unwrap(), expected);
        // Kaplan–Meier on the same data crosses at 2 as well (1/3 <= 0.5).
        let km = kaplan_meier(&d).unwrap();
        assert_eq!(median_crossing(&km, 0.5).unwrap(), Some(2.0));
    }

    #[test]
    fn stump_conditional_is_kaplan_meier() {
        let d = three_events();
        for agg in [Aggregation::Pooled, Aggregation::Mean] {
            let cfg = ForestConfig {
                aggregation: agg,
                ..stump_cfg(3)
            };
            let m = fit_conditional_ensemble(&d, &cfg).unwrap();
            let s = predict_forest_survival(&m, &[0.0]).unwrap();
            assert_eq!(s, kaplan_meier(&d).unwrap());
        }
    }

    #[test]
    fn stump_competing_is_aalen_johansen() {
        let rows = [(1.0, Converted), (2.0, Churned), (3.0, Censored), (3.0, Converted)];
        let d = SurvivalDataset::from_times(&rows, TimeAxis::Lifetime, true).unwrap();
        let m = fit_rsf_competing(&d, &stump_cfg(1)).unwrap();
        let c = predict_forest_incidence(&m, &[], Converted).unwrap();
        assert_eq!(c, aalen_johansen(&d, Converted).unwrap());
    }

    #[test]
    fn wrong_kind_and_event_errors() {
        let d = three_events();
        let m = fit_rsf(&d, &stump_cfg(3)).unwrap();
        assert!(matches!(
            predict_forest_incidence(&m, &[0.0], Converted),
            Err(Error::InvalidModel(_))
        ));
        assert!(matches!(predict_forest_survival(&m, &[]), Err(Error::Shape { .. })));
        assert!(matches!(fit_rsf(&d, &stump_cfg(4)), Err(Error::DegenerateFit(_))));
        let cfg = ForestConfig {
            mtry: Some(2),
            ..stump_cfg(1)
        };
        assert!(matches!(fit_rsf(&d, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn competing_requires_both_event_types() {
        let rows = [(1.0, Converted), (3.0, Censored)];
        let d = SurvivalDataset::from_times(&rows, TimeAxis::Lifetime, true).unwrap();
        assert!(matches!(fit_rsf_competing(&d, &stump_cfg(1)), Err(Error::DegenerateFit(_))));
        let single = d.to_single_risk();
        assert!(matches!(fit_rsf_competing(&single, &stump_cfg(1)), Err(Error::Config(_))));
    }

    #[test]
    fn from_parts_rejects_bad_trees() {
        let bad = Tree {
            nodes: vec![Node::Split {
                feature: 0,
                threshold: 0.0,
                left: 0,
                right: 0,
            }],
        };
        assert!(ForestModel::from_parts(
            ForestKind::Rsf,
            vec![bad],
            ForestConfig::default(),
            vec!["x".into()],
            TimeAxis::Lifetime,
            vec![]
        )
        .is_err());
    }
}
