//! Cox proportional-hazards regression with Breslow ties, fitted by damped
//! Newton iterations on the (optionally ridge-penalised) log partial likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{median_crossing, EventStatus, StepFunction, SurvivalDataset};

/// Coefficients larger than this in absolute value signal a monotone likelihood.
pub const DIVERGENCE_GUARD: f64 = 50.0;
/// Coefficient size above which vanishing curvature signals a flat likelihood.
const FLAT_GUARD: f64 = 10.0;

/// Newton steps must also shrink below this before the fit counts as converged.
/// Under separation the gradient vanishes while steps stay near 1.
const STEP_TOL: f64 = 1e-4;

/// Largest Newton step still accepted as converged once the likelihood stalls.
const STALL_STEP: f64 = 1e-2;

const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub ridge: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_partial_likelihood: f64,
}

/// A fitted Cox model. `baseline_cum_hazard` is the Breslow estimator for a
/// subject whose covariates equal `reference` (the training means for fitted
/// models; an empty reference stands for the zero vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub baseline_cum_hazard: StepFunction,
    #[serde(default)]
    pub reference: Vec<f64>,
    pub feature_names: Vec<String>,
    pub convergence: Convergence,
}

/// Penalised log partial likelihood with its gradient and Hessian.
#[derive(Debug, Clone)]
pub struct Objective {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

struct Design {
    /// Row-major covariates, ordered by descending time.
    x: Vec<Vec<f64>>,
    time: Vec<f64>,
    event: Vec<bool>,
}

impl Design {
    fn new(data: &SurvivalDataset, center: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let recs = data.records();
        order.sort_by(|&a, &b| recs[b].time.total_cmp(&recs[a].time));
        let x = order
            .iter()
            .map(|&i| {
                recs[i]
                    .covariates
                    .iter()
                    .zip(center)
                    .map(|(v, c)| v - c)
                    .collect()
            })
            .collect();
        Design {
            x,
            time: order.iter().map(|&i| recs[i].time).collect(),
            event: order
                .iter()
                .map(|&i| recs[i].status == EventStatus::Converted)
                .collect(),
        }
    }

    fn p(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Sweep the risk sets from the latest time backwards. The running sums
    /// are scaled by `exp(-m)` with `m` the current maximum linear predictor;
    /// `s_excl` is the scaled sum without one maximal term so that
    /// `log S0 = m + ln_1p(s_excl)` keeps full precision.
    fn objective(&self, beta: &[f64], ridge: f64) -> Objective {
        let p = beta.len();
        let n = self.x.len();
        let eta: Vec<f64> = self.x.iter().map(|xi| dot(xi, beta)).collect();

        let mut value = 0.0;
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];

        let mut m = f64::NEG_INFINITY;
        let mut s_excl = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![vec![0.0; p]; p];

        let mut i = 0;
        while i < n {
            let t = self.time[i];
            let mut j = i;
            while j < n && self.time[j] == t {
                let e = eta[j];
                let w = if e > m {
                    let scale = if m.is_finite() { (m - e).exp() } else { 0.0 };
                    s_excl = if m.is_finite() { (s_excl + 1.0) * scale } else { 0.0 };
                    for a in 0..p {
                        s1[a] *= scale;
                        for b in 0..=a {
                            s2[a][b] *= scale;
                        }
                    }
                    m = e;
                    1.0
                } else {
                    let w = (e - m).exp();
                    s_excl += w;
                    w
                };
                let xj = &self.x[j];
                for a in 0..p {
                    s1[a] += w * xj[a];
                    for b in 0..=a {
                        s2[a][b] += w * xj[a] * xj[b];
                    }
                }
                j += 1;
            }
            let s0 = 1.0 + s_excl;
            let log_s0 = m + s_excl.ln_1p();
            for k in i..j {
                if !self.event[k] {
                    continue;
                }
                value += eta[k] - log_s0;
                let xk = &self.x[k];
                for a in 0..p {
                    let mean_a = s1[a] / s0;
                    grad[a] += xk[a] - mean_a;
                    for b in 0..=a {
                        hess[a][b] -= s2[a][b] / s0 - mean_a * (s1[b] / s0);
                    }
                }
            }
            i = j;
        }

        value -= 0.5 * ridge * dot(beta, beta);
        for a in 0..p {
            grad[a] -= ridge * beta[a];
            hess[a][a] -= ridge;
            for b in 0..a {
                hess[b][a] = hess[a][b];
            }
        }
        Objective {
            value,
            gradient: grad,
            hessian: hess,
        }
    }

    /// Breslow cumulative hazard at the centered linear predictor.
    fn breslow(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.x.len();
        let risk: Vec<f64> = self.x.iter().map(|xi| dot(xi, beta).exp()).collect();
        // Descending sweep gives the risk-set sums; collect, then reverse.
        let mut rows: Vec<(f64, f64)> = Vec::new();
        let mut s0 = 0.0;
        let mut i = 0;
        while i < n {
            let t = self.time[i];
            let mut j = i;
            let mut d = 0usize;
            while j < n && self.time[j] == t {
                s0 += risk[j];
                d += usize::from(self.event[j]);
                j += 1;
            }
            if d > 0 {
                rows.push((t, d as f64 / s0));
            }
            i = j;
        }
        rows.reverse();
        let mut h = 0.0;
        let (knots, values) = rows
            .into_iter()
            .map(|(t, inc)| {
                h += inc;
                (t, h)
            })
            .unzip();
        (knots, values)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn column_means(data: &SurvivalDataset) -> Vec<f64> {
    let p = data.n_features();
    let mut means = vec![0.0; p];
    for r in data.records() {
        for (m, v) in means.iter_mut().zip(&r.covariates) {
            *m += v;
        }
    }
    let n = data.len().max(1) as f64;
    means.iter_mut().for_each(|m| *m /= n);
    means
}

/// Log partial likelihood (Breslow ties) minus `ridge/2 * |beta|^2`, with
/// analytic gradient and Hessian, on the raw (uncentered) covariates.
pub fn partial_likelihood(data: &SurvivalDataset, beta: &[f64], ridge: f64) -> Result<Objective> {
    if beta.len() != data.n_features() {
        return Err(Error::Shape {
            expected: data.n_features(),
            actual: beta.len(),
        });
    }
    let zeros = vec![0.0; beta.len()];
    Ok(Design::new(data, &zeros).objective(beta, ridge))
}

/// Solve `(-H) delta = g`, adding diagonal jitter when `-H` is not positive definite.
fn newton_direction(obj: &Objective) -> Vec<f64> {
    let p = obj.gradient.len();
    if p == 0 {
        return Vec::new();
    }
    let neg_h = DMatrix::from_fn(p, p, |a, b| -obj.hessian[a][b]);
    let g = DVector::from_column_slice(&obj.gradient);
    let scale = (0..p).map(|a| neg_h[(a, a)].abs()).fold(0.0, f64::max).max(1e-12);
    let mut jitter = 0.0;
    for _ in 0..20 {
        let mut m = neg_h.clone();
        for a in 0..p {
            m[(a, a)] += jitter;
        }
        if let Some(chol) = m.cholesky() {
            return chol.solve(&g).iter().copied().collect();
        }
        jitter = if jitter == 0.0 { scale * 1e-10 } else { jitter * 10.0 };
    }
    // Gradient ascent as a last resort.
    obj.gradient.iter().map(|g| g / scale).collect()
}

/// Fit a Cox model by damped Newton iterations.
pub fn fit_cox(data: &SurvivalDataset, opts: &CoxOptions) -> Result<CoxFit> {
    if data.competing_risks() {
        return Err(Error::WrongEstimator(
            "Cox regression needs a single-risk dataset".into(),
        ));
    }
    if data.count_status(EventStatus::Converted) == 0 {
        return Err(Error::DegenerateFit("no events to fit a Cox model".into()));
    }
    if opts.ridge < 0.0 || !(opts.tol > 0.0) {
        return Err(Error::Config("ridge must be >= 0 and tol > 0".into()));
    }
    let center = column_means(data);
    let design = Design::new(data, &center);
    let p = design.p().max(data.n_features());

    // Gradient tolerance scales with the number of events, the size of the
    // log partial likelihood's sum.
    let events = data.count_status(EventStatus::Converted) as f64;
    let gtol = opts.tol * events;
    let mut beta = vec![0.0; p];
    let mut obj = design.objective(&beta, opts.ridge);
    let mut iterations = 0;
    loop {
        let gnorm = norm(&obj.gradient);
        let step = newton_direction(&obj);
        let step_size = step.iter().fold(0.0f64, |acc, s| acc.max(s.abs()));
        if gnorm <= gtol && step_size <= STEP_TOL {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::Convergence {
                iterations,
                gradient_norm: gnorm,
                last_beta: beta,
            });
        }
        iterations += 1;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_obj = design.objective(&candidate, opts.ridge);
            if cand_obj.value.is_finite() && cand_obj.value >= obj.value {
                accepted = Some((candidate, cand_obj));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((b, o)) => {
                // Ill-conditioned designs can stall with a small gradient that
                // no longer moves the likelihood at double precision.
                let stalled = (o.value - obj.value).abs() <= 1e-13 * obj.value.abs().max(1.0)
                    && step_size <= STALL_STEP
                    && gnorm <= gtol.sqrt();
                beta = b;
                obj = o;
                if stalled {
                    break;
                }
            }
            None if gnorm <= gtol => break,
            None => {
                return Err(Error::Convergence {
                    iterations,
                    gradient_norm: gnorm,
                    last_beta: beta,
                })
            }
        }
        if let Some((index, &value)) = beta
            .iter()
            .enumerate()
            .find(|(_, b)| b.abs() > DIVERGENCE_GUARD)
        {
            return Err(Error::MonotoneLikelihood { index, value });
        }
    }

    // Vanishing curvature at a large coefficient: the likelihood is still
    // climbing but has flattened out below floating-point resolution.
    if let Some((index, &value)) = beta.iter().enumerate().find(|&(j, b)| {
        b.abs() > FLAT_GUARD && -obj.hessian[j][j] <= 1e-10 * events
    }) {
        return Err(Error::MonotoneLikelihood { index, value });
    }

    // The centering is folded into the baseline unless exp(-beta'mean) would
    // leave the floating-point range; then the baseline stays at the means.
    let (knots, centered) = design.breslow(&beta);
    let shift = -dot(&beta, &center);
    let (values, reference) = if shift.abs() < 700.0 {
        let fold = shift.exp();
        (centered.iter().map(|h| h * fold).collect(), Vec::new())
    } else {
        (centered, center)
    };
    Ok(CoxFit {
        baseline_cum_hazard: StepFunction::from_parts_unchecked(knots, values, 0.0),
        reference,
        convergence: Convergence {
            iterations,
            gradient_norm: norm(&obj.gradient),
            log_partial_likelihood: obj.value,
        },
        beta,
        feature_names: data.feature_names().to_vec(),
    })
}

impl CoxFit {
    /// `beta' (x - reference)`.
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::Shape {
                expected: self.beta.len(),
                actual: x.len(),
            });
        }
        Ok(if self.reference.is_empty() {
            dot(&self.beta, x)
        } else {
            self.beta
                .iter()
                .zip(x.iter().zip(&self.reference))
                .map(|(b, (v, r))| b * (v - r))
                .sum()
        })
    }

    /// Hazard ratio against the baseline, `exp(beta' (x - reference))`.
    pub fn risk_score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.linear_predictor(x)?.exp())
    }
}

/// `S(t | x) = exp(-H0(t) exp(beta' (x - reference)))`.
pub fn predict_cox_survival(fit: &CoxFit, x: &[f64]) -> Result<StepFunction> {
    let lp = fit.linear_predictor(x)?;
    let r = lp.exp();
    Ok(fit.baseline_cum_hazard.map_values(|h| {
        if h == 0.0 {
            1.0
        } else if r.is_finite() && r > 0.0 {
            (-h * r).exp()
        } else {
            // exp(beta'x) out of range: combine on the log scale.
            (-(h.ln() + lp).exp()).exp()
        }
    }))
}

/// Median of the predicted survival curve; `None` when it never reaches 0.5.
pub fn predict_cox_median(fit: &CoxFit, x: &[f64]) -> Result<Option<f64>> {
    median_crossing(&predict_cox_survival(fit, x)?, 0.5)
}
