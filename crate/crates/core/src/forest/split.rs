//! Node-level split search: log-rank splitting for survival forests and the
//! two-step permutation-test split for conditional inference trees.

use statrs::function::erf::erfc;

use crate::survival::EventStatus;

/// Training data laid out for split search.
pub(crate) struct GrowData {
    /// Column-major covariates.
    pub columns: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub status: Vec<EventStatus>,
    /// Identity key per feature, derived from the feature name.
    pub feature_keys: Vec<u64>,
    /// Whether the record counts as an event for the splitting statistic.
    pub stat_event: Vec<bool>,
    /// Index of the largest splitting-event time `<= T_i`, or -1.
    pub stat_bin: Vec<i32>,
    /// Rank of each record in (time, events-first) order.
    pub time_rank: Vec<u32>,
}

impl GrowData {
    pub fn new(
        columns: Vec<Vec<f64>>,
        times: Vec<f64>,
        status: Vec<EventStatus>,
        feature_keys: Vec<u64>,
        stat_event: Vec<bool>,
    ) -> Self {
        let mut stat_times: Vec<f64> = times
            .iter()
            .zip(&stat_event)
            .filter(|(_, &e)| e)
            .map(|(&t, _)| t)
            .collect();
        stat_times.sort_by(f64::total_cmp);
        stat_times.dedup();
        let stat_bin = times
            .iter()
            .map(|&t| stat_times.partition_point(|&s| s <= t) as i32 - 1)
            .collect();
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| {
            times[a]
                .total_cmp(&times[b])
                .then(status[a].tie_rank().cmp(&status[b].tie_rank()))
                .then(a.cmp(&b))
        });
        let mut time_rank = vec![0u32; times.len()];
        for (r, &i) in order.iter().enumerate() {
            time_rank[i] = r as u32;
        }
        Self {
            columns,
            times,
            status,
            feature_keys,
            stat_event,
            stat_bin,
            time_rank,
        }
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_events(&self, idx: &[u32]) -> usize {
        idx.iter()
            .filter(|&&i| self.status[i as usize].is_event())
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub statistic: f64,
}

/// Node records sorted by one feature, ties broken by record index.
fn sorted_by_feature(data: &GrowData, idx: &[u32], feature: usize) -> Vec<(f64, u32)> {
    let col = &data.columns[feature];
    let mut pairs: Vec<(f64, u32)> = idx.iter().map(|&i| (col[i as usize], i)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    pairs
}

/// Candidate thresholds: midpoints between consecutive distinct values, or
/// at most `cap` midpoints placed at sample quantiles.
pub(crate) fn candidate_cuts(sorted: &[(f64, u32)], cap: usize) -> Vec<f64> {
    let mut distinct: Vec<f64> = sorted.iter().map(|p| p.0).collect();
    distinct.dedup();
    if distinct.len() < 2 {
        return Vec::new();
    }
    if distinct.len() - 1 <= cap {
        return distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let n = sorted.len();
    let mut cuts = Vec::with_capacity(cap);
    for j in 1..=cap {
        let pos = (j * n) / (cap + 1);
        let v = sorted[pos.min(n - 1)].0;
        let k = distinct.partition_point(|&d| d <= v);
        if k < distinct.len() {
            let cut = 0.5 * (distinct[k - 1] + distinct[k]);
            if cuts.last() != Some(&cut) {
                cuts.push(cut);
            }
        }
    }
    cuts
}

/// Best split by absolute standardized log-rank statistic over `features`
/// (visited in the given order; earlier features win exact ties).
pub(crate) fn best_logrank_split(
    data: &GrowData,
    idx: &[u32],
    features: &[usize],
    min_events: usize,
    max_cuts: usize,
) -> Option<SplitChoice> {
    // Local event bins for the splitting statistic.
    let mut bins: Vec<i32> = idx
        .iter()
        .filter(|&&i| data.stat_event[i as usize])
        .map(|&i| data.stat_bin[i as usize])
        .collect();
    bins.sort_unstable();
    bins.dedup();
    let k_len = bins.len();
    if k_len == 0 {
        return None;
    }
    let local = |i: u32| -> i32 { bins.partition_point(|&b| b <= data.stat_bin[i as usize]) as i32 - 1 };
    let local_idx: Vec<(u32, i32)> = idx.iter().map(|&i| (i, local(i))).collect();
    let mut cnt = vec![0f64; k_len];
    let mut d_tot = vec![0f64; k_len];
    for &(i, k) in &local_idx {
        if k >= 0 {
            cnt[k as usize] += 1.0;
            if data.stat_event[i as usize] {
                d_tot[k as usize] += 1.0;
            }
        }
    }
    let mut y_tot = vec![0f64; k_len];
    let mut acc = 0.0;
    for k in (0..k_len).rev() {
        acc += cnt[k];
        y_tot[k] = acc;
    }
    let total_events = data.n_events(idx);

    let mut best: Option<SplitChoice> = None;
    let mut cnt_l = vec![0f64; k_len];
    let mut d_l = vec![0f64; k_len];
    for &f in features {
        let sorted = sorted_by_feature(data, idx, f);
        let cuts = candidate_cuts(&sorted, max_cuts);
        if cuts.is_empty() {
            continue;
        }
        cnt_l.iter_mut().for_each(|v| *v = 0.0);
        d_l.iter_mut().for_each(|v| *v = 0.0);
        let mut left_events = 0usize;
        let mut pos = 0;
        for &cut in &cuts {
            while pos < sorted.len() && sorted[pos].0 <= cut {
                let i = sorted[pos].1;
                let k = local(i);
                if k >= 0 {
                    cnt_l[k as usize] += 1.0;
                    if data.stat_event[i as usize] {
                        d_l[k as usize] += 1.0;
                    }
                }
                if data.status[i as usize].is_event() {
                    left_events += 1;
                }
                pos += 1;
            }
            if left_events < min_events || total_events - left_events < min_events {
                continue;
            }
            let mut num = 0.0;
            let mut var = 0.0;
            let mut y_l = 0.0;
            for k in (0..k_len).rev() {
                y_l += cnt_l[k];
                let y = y_tot[k];
                let d = d_tot[k];
                num += d_l[k] - d * y_l / y;
                if y > 1.0 {
                    var += y_l * (y - y_l) * d * (y - d) / (y * y * (y - 1.0));
                }
            }
            if var <= 0.0 {
                continue;
            }
            let stat = num.abs() / var.sqrt();
            if best.is_none_or(|b| stat > b.statistic) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: cut,
                    statistic: stat,
                });
            }
        }
    }
    best
}

/// Log-rank scores `delta_i - H(T_i)` for the node sample, with `H` the
/// node's Nelson–Aalen estimate (ties included at `T_i`).
pub(crate) fn logrank_scores(data: &GrowData, idx: &[u32]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..idx.len()).collect();
    order.sort_by_key(|&j| data.time_rank[idx[j] as usize]);
    let n = idx.len() as f64;
    let mut scores = vec![0.0; idx.len()];
    let mut removed = 0.0;
    let mut h = 0.0;
    let mut a = 0;
    while a < order.len() {
        let t = data.times[idx[order[a]] as usize];
        let mut b = a;
        let mut d = 0.0;
        while b < order.len() && data.times[idx[order[b]] as usize] == t {
            if data.status[idx[order[b]] as usize].is_event() {
                d += 1.0;
            }
            b += 1;
        }
        h += d / (n - removed);
        for &j in &order[a..b] {
            let delta = if data.status[idx[j] as usize].is_event() { 1.0 } else { 0.0 };
            scores[j] = delta - h;
        }
        removed += (b - a) as f64;
        a = b;
    }
    scores
}

/// Outcome of the variable-selection step of a conditional inference split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Association {
    pub feature: usize,
    /// Bonferroni-adjusted p-value.
    pub p_adjusted: f64,
    pub statistic: f64,
}

/// Standardized squared linear statistic `(T - mu)^2 / sigma^2` of the
/// conditional (permutation) distribution of `sum x_i s_i`.
fn quadratic_statistic(n: f64, sum_x: f64, sum_x2: f64, t: f64, mean_s: f64, var_s: f64) -> f64 {
    let mu = sum_x * mean_s;
    let sigma2 = n / (n - 1.0) * var_s * sum_x2 - var_s * sum_x * sum_x / (n - 1.0);
    if sigma2 <= 1e-12 * var_s.max(f64::MIN_POSITIVE) * sum_x2.max(1.0) || !sigma2.is_finite() {
        return 0.0;
    }
    (t - mu) * (t - mu) / sigma2
}

fn score_moments(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Step one: the candidate feature most associated with the log-rank scores.
pub(crate) fn select_feature(
    data: &GrowData,
    idx: &[u32],
    scores: &[f64],
    features: &[usize],
) -> Option<Association> {
    if idx.len() < 2 || features.is_empty() {
        return None;
    }
    let n = idx.len() as f64;
    let (mean_s, var_s) = score_moments(scores);
    let m = features.len() as f64;
    let mut best: Option<Association> = None;
    for &f in features {
        let col = &data.columns[f];
        let (mut sx, mut sx2, mut t) = (0.0, 0.0, 0.0);
        for (j, &i) in idx.iter().enumerate() {
            let x = col[i as usize];
            sx += x;
            sx2 += x * x;
            t += x * scores[j];
        }
        let c = quadratic_statistic(n, sx, sx2, t, mean_s, var_s);
        let p = if c > 0.0 { erfc((c / 2.0).sqrt()) } else { 1.0 };
        let p_adjusted = (m * p).min(1.0);
        let better = match best {
            None => true,
            Some(b) => p_adjusted < b.p_adjusted || (p_adjusted == b.p_adjusted && c > b.statistic),
        };
        if better {
            best = Some(Association {
                feature: f,
                p_adjusted,
                statistic: c,
            });
        }
    }
    best
}

/// Step two: cutpoint on `feature` maximizing the two-sample linear statistic.
pub(crate) fn best_cutpoint(
    data: &GrowData,
    idx: &[u32],
    scores: &[f64],
    feature: usize,
    min_events: usize,
    max_cuts: usize,
) -> Option<SplitChoice> {
    let n = idx.len() as f64;
    let (mean_s, var_s) = score_moments(scores);
    let col = &data.columns[feature];
    let mut order: Vec<usize> = (0..idx.len()).collect();
    order.sort_by(|&a, &b| col[idx[a] as usize].total_cmp(&col[idx[b] as usize]).then(idx[a].cmp(&idx[b])));
    let sorted: Vec<(f64, u32)> = order.iter().map(|&j| (col[idx[j] as usize], idx[j])).collect();
    let cuts = candidate_cuts(&sorted, max_cuts);
    let total_events = data.n_events(idx);

    let mut best: Option<SplitChoice> = None;
    let (mut n_l, mut t_l, mut ev_l) = (0.0, 0.0, 0usize);
    let mut pos = 0;
    for &cut in &cuts {
        while pos < order.len() && sorted[pos].0 <= cut {
            let j = order[pos];
            n_l += 1.0;
            t_l += scores[j];
            if data.status[idx[j] as usize].is_event() {
                ev_l += 1;
            }
            pos += 1;
        }
        if ev_l < min_events || total_events - ev_l < min_events {
            continue;
        }
        let c = quadratic_statistic(n, n_l, n_l, t_l, mean_s, var_s);
        if best.is_none_or(|b| c > b.statistic) {
            best = Some(SplitChoice {
                feature,
                threshold: cut,
                statistic: c,
            });
        }
    }
    best
}
