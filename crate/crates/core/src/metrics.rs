//! Evaluation statistics.
//!
//! Rank statistics use average ranks for ties, so every AUROC here counts a
//! tied positive/negative pair as one half.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Scores with binary labels and optional survey design columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub weights: Option<Vec<f64>>,
    pub psu: Option<Vec<i64>>,
    pub stratum: Option<Vec<i64>>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        Ok(Self {
            scores,
            labels,
            ..Default::default()
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.scores.len() {
            return Err(Error::Shape("weights length differs from scores".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    (pos, labels.len() - pos)
}

/// Average (mid) ranks, 1-based.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve via the rank-sum identity.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let (n1, n0) = class_counts(labels);
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * n0 as f64))
}

/// AUROC where each positive/negative pair counts with weight `w_i * w_j`.
pub fn weighted_auroc(scores: &[f64], labels: &[u8], weights: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() || scores.len() != weights.len() {
        return Err(Error::Shape("scores, labels and weights differ in length".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Config("sampling weights must be positive".into()));
    }
    let (n1, n0) = class_counts(labels);
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut below_neg, mut num, mut wpos, mut wneg) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let (mut tie_pos, mut tie_neg) = (0.0, 0.0);
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                tie_pos += weights[k];
            } else {
                tie_neg += weights[k];
            }
        }
        num += tie_pos * (below_neg + 0.5 * tie_neg);
        below_neg += tie_neg;
        wpos += tie_pos;
        wneg += tie_neg;
        i = j + 1;
    }
    Ok(num / (wpos * wneg))
}

pub fn brier(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Shape("probs and labels differ in length".into()));
    }
    if probs.is_empty() {
        return Err(Error::Empty("brier score input"));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config("probabilities must lie in [0, 1]".into()));
    }
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| (p - y as f64).powi(2))
        .sum::<f64>()
        / probs.len() as f64)
}

/// How ties at the screening cut are broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreak {
    /// Earlier records win ties.
    #[default]
    InputOrder,
    /// Ties broken by a seeded random permutation.
    Random(u64),
}

/// Recall among true positives when the `ceil(fraction * n)` highest-scored
/// records are flagged.
pub fn sensitivity_at_fraction(scores: &[f64], labels: &[u8], fraction: f64, ties: TieBreak) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("screening fraction {fraction} not in (0, 1]")));
    }
    let (n1, _) = class_counts(labels);
    if n1 == 0 {
        return Err(Error::SingleClass);
    }
    let n = scores.len();
    let k = ((fraction * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    if let TieBreak::Random(seed) = ties {
        order.shuffle(&mut crate::rng::rng_from(seed, &[crate::rng::stream::TIES]));
    }
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let hits = order[..k].iter().filter(|&&i| labels[i] == 1).count();
    Ok(hits as f64 / n1 as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeLongResult {
    pub auc_a: f64,
    pub auc_b: f64,
    pub z: f64,
    pub p_value: f64,
    /// Set when the variance of the difference is zero.
    pub degenerate: bool,
}

/// Structural components (placement values) of one score vector.
fn placements(scores: &[f64], labels: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 0).map(|(s, _)| *s).collect();
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let mut all = pos.clone();
    all.extend_from_slice(&neg);
    let r_all = midranks(&all);
    let r_pos = midranks(&pos);
    let r_neg = midranks(&neg);
    let v10 = (0..pos.len()).map(|i| (r_all[i] - r_pos[i]) / n).collect();
    let v01 = (0..neg.len())
        .map(|j| 1.0 - (r_all[pos.len() + j] - r_neg[j]) / m)
        .collect();
    (v10, v01)
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

pub fn standard_normal_sf2(z: f64) -> f64 {
    let n = Normal::standard();
    (2.0 * (1.0 - n.cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Paired DeLong test for two correlated AUROCs on the same labels.
pub fn delong_test(scores_a: &[f64], scores_b: &[f64], labels: &[u8]) -> Result<DeLongResult> {
    if scores_a.len() != labels.len() || scores_b.len() != labels.len() {
        return Err(Error::Shape("score vectors and labels differ in length".into()));
    }
    let (n1, n0) = class_counts(labels);
    if n1 < 2 || n0 < 2 {
        return Err(Error::SingleClass);
    }
    let (a10, a01) = placements(scores_a, labels);
    let (b10, b01) = placements(scores_b, labels);
    let auc_a = a10.iter().sum::<f64>() / n1 as f64;
    let auc_b = b10.iter().sum::<f64>() / n1 as f64;
    let var10 = covariance(&a10, &a10) + covariance(&b10, &b10) - 2.0 * covariance(&a10, &b10);
    let var01 = covariance(&a01, &a01) + covariance(&b01, &b01) - 2.0 * covariance(&a01, &b01);
    let var = var10 / n1 as f64 + var01 / n0 as f64;
    if var.is_nan() || var <= 1e-300 {
        return Ok(DeLongResult {
            auc_a,
            auc_b,
            z: 0.0,
            p_value: 1.0,
            degenerate: true,
        });
    }
    let z = (auc_a - auc_b) / var.sqrt();
    Ok(DeLongResult {
        auc_a,
        auc_b,
        z,
        p_value: standard_normal_sf2(z),
        degenerate: false,
    })
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape("x and y differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::Empty("pearson correlation needs two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if sxx <= 0.0 || syy <= 0.0 || constant(x) || constant(y) {
        return Err(Error::ZeroVariance("pearson correlation"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    /// `None` for empty bins.
    pub mean_predicted: Option<f64>,
    pub observed_rate: Option<f64>,
    pub count: usize,
}

/// Equal-width reliability diagram on `[0, 1]`; `p = 1` falls in the last bin.
pub fn reliability_bins(probs: &[f64], labels: &[u8], n_bins: usize) -> Result<Vec<ReliabilityBin>> {
    if n_bins < 2 {
        return Err(Error::Config("reliability diagram needs at least 2 bins".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::Shape("probs and labels differ in length".into()));
    }
    let mut sum_p = vec![0.0; n_bins];
    let mut sum_y = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for (&p, &y) in probs.iter().zip(labels) {
        let b = ((p * n_bins as f64).floor() as usize).min(n_bins - 1);
        sum_p[b] += p;
        sum_y[b] += y as f64;
        count[b] += 1;
    }
    Ok((0..n_bins)
        .map(|b| {
            let c = count[b];
            ReliabilityBin {
                lower: b as f64 / n_bins as f64,
                upper: (b + 1) as f64 / n_bins as f64,
                mean_predicted: (c > 0).then(|| sum_p[b] / c as f64),
                observed_rate: (c > 0).then(|| sum_y[b] / c as f64),
                count: c,
            }
        })
        .collect())
}

/// Largest |mean predicted - observed| over occupied bins.
pub fn max_calibration_gap(bins: &[ReliabilityBin]) -> f64 {
    bins.iter()
        .filter_map(|b| Some((b.mean_predicted? - b.observed_rate?).abs()))
        .fold(0.0, f64::max)
}

/// F1 when records with `score >= threshold` are flagged.
pub fn f1_at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Scans midpoints between consecutive distinct scores; returns the lowest
/// threshold attaining the maximal F1.
pub fn f1_optimal_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let (n1, n0) = class_counts(labels);
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sweep from the lowest threshold upwards: everything above is flagged.
    let (mut tp, mut fp) = (n1, n0);
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                tp -= 1;
            } else {
                fp -= 1;
            }
        }
        if j + 1 < order.len() {
            let thr = 0.5 * (scores[order[j]] + scores[order[j + 1]]);
            let fneg = n1 - tp;
            let f1 = 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64;
            if best.is_none_or(|(_, b)| f1 > b) {
                best = Some((thr, f1));
            }
        }
        i = j + 1;
    }
    Ok(best.unwrap_or_else(|| {
        let lo = scores[order[0]] - 1.0;
        (lo, f1_at_threshold(scores, labels, lo))
    }))
}
