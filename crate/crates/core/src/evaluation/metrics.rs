use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::stream_rng;

/// One point of an ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub auc: f64,
    /// Starts at (0, 0) with threshold `+inf`, then one point per distinct
    /// score in decreasing order.
    pub curve: Vec<RocPoint>,
}

fn check_labels(labels: &[bool], scores: &[f64]) -> Result<(usize, usize)> {
    if labels.len() != scores.len() {
        return Err(Error::Data(format!("{} labels but {} scores", labels.len(), scores.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("ROC analysis needs both classes".into()));
    }
    Ok((n_pos, n_neg))
}

/// AUC from the Mann–Whitney statistic with average ranks for ties.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<Roc> {
    let (n_pos, n_neg) = check_labels(labels, scores)?;
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = 0.5 * ((i + 1) + (j + 1)) as f64;
        rank_sum_pos += avg_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let auc = (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);

    let mut curve = vec![RocPoint { threshold: f64::INFINITY, false_positive_rate: 0.0, true_positive_rate: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = n;
    while k > 0 {
        let s = scores[order[k - 1]];
        while k > 0 && scores[order[k - 1]] == s {
            if labels[order[k - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        curve.push(RocPoint { threshold: s, false_positive_rate: fp as f64 / nn, true_positive_rate: tp as f64 / np });
    }
    Ok(Roc { auc, curve })
}

/// A mean score with its per-observation contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: String,
    pub value: f64,
    pub contributions: Vec<f64>,
    pub p_value: Option<f64>,
    pub n_permutations: Option<usize>,
}

impl ScoreReport {
    pub fn from_contributions(metric: impl Into<String>, contributions: Vec<f64>) -> Self {
        let value = if contributions.is_empty() {
            f64::NAN
        } else {
            contributions.iter().sum::<f64>() / contributions.len() as f64
        };
        Self { metric: metric.into(), value, contributions, p_value: None, n_permutations: None }
    }

    /// Pooled report over both contribution lists.
    pub fn concat(&self, other: &ScoreReport) -> ScoreReport {
        let mut c = self.contributions.clone();
        c.extend_from_slice(&other.contributions);
        ScoreReport::from_contributions(self.metric.clone(), c)
    }
}

/// Mean Brier score `mean((p - y)^2)`.
pub fn brier(indicators: &[bool], probabilities: &[f64]) -> Result<ScoreReport> {
    if indicators.len() != probabilities.len() {
        return Err(Error::Data(format!("{} indicators but {} probabilities", indicators.len(), probabilities.len())));
    }
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Data(format!("probability {p} outside [0, 1]")));
    }
    let c = indicators.iter().zip(probabilities).map(|(&y, &p)| (p - if y { 1.0 } else { 0.0 }).powi(2)).collect();
    Ok(ScoreReport::from_contributions("brier", c))
}

/// One-sided paired sign-flip test of "A scores lower than B".
///
/// The statistic is `mean(b - a)`; `p = (1 + #{T* >= T}) / (1 + n_perm)`.
pub fn permutation_test(contrib_a: &[f64], contrib_b: &[f64], n_perm: usize, seed: u64) -> Result<f64> {
    if contrib_a.len() != contrib_b.len() {
        return Err(Error::Data(format!("{} vs {} contributions", contrib_a.len(), contrib_b.len())));
    }
    if n_perm == 0 || contrib_a.is_empty() {
        return Ok(1.0);
    }
    let diffs: Vec<f64> = contrib_b.iter().zip(contrib_a).map(|(b, a)| b - a).collect();
    let n = diffs.len() as f64;
    let observed = diffs.iter().sum::<f64>() / n;
    let mut rng = stream_rng(seed, 0x9E);
    let mut count = 0usize;
    for _ in 0..n_perm {
        let t: f64 = diffs.iter().map(|&d| if rng.random::<bool>() { d } else { -d }).sum::<f64>() / n;
        if t >= observed {
            count += 1;
        }
    }
    Ok((1 + count) as f64 / (1 + n_perm) as f64)
}

/// Brier report for A with the permutation p-value against B attached.
pub fn compare_brier(
    indicators: &[bool],
    prob_a: &[f64],
    prob_b: &[f64],
    n_perm: usize,
    seed: u64,
) -> Result<(ScoreReport, ScoreReport)> {
    let mut a = brier(indicators, prob_a)?;
    let b = brier(indicators, prob_b)?;
    a.p_value = Some(permutation_test(&a.contributions, &b.contributions, n_perm, seed)?);
    a.n_permutations = Some(n_perm);
    Ok((a, b))
}
