use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{boost, FeatureMatrix, LossAdapter, TrainConfig};
use crate::error::{Error, Result};
use crate::stats::stream_rng;

/// Validation curves indexed by tree count `0..=n_trees`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub selected: usize,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Mean validation loss per row, one curve per fold.
    pub fold_curves: Vec<Vec<f64>>,
}

/// K-fold cross-validation over groups (days), with the one-standard-error
/// rule: the smallest tree count whose mean validation loss is within one
/// standard error (across folds) of the minimum.
pub fn cross_validate(
    loss: &dyn LossAdapter,
    features: &FeatureMatrix,
    rows: &[usize],
    config: &TrainConfig,
    n_folds: usize,
) -> Result<CvResult> {
    config.validate()?;
    if n_folds < 2 {
        return Err(Error::Config(format!("cross-validation needs at least 2 folds, got {n_folds}")));
    }
    let mut groups: Vec<usize> = rows.iter().map(|&r| loss.group(r)).collect();
    groups.sort_unstable();
    groups.dedup();
    if groups.len() < n_folds {
        return Err(Error::Data(format!("{} cross-validation units for {n_folds} folds", groups.len())));
    }
    groups.shuffle(&mut stream_rng(config.seed, 0xC5));
    let mut fold_of_group = std::collections::HashMap::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        fold_of_group.insert(*g, i * n_folds / groups.len());
    }
    let fold_rows = |k: usize, valid: bool| -> Vec<usize> {
        rows.iter().copied().filter(|&r| (fold_of_group[&loss.group(r)] == k) == valid).collect()
    };

    let fold_curves = (0..n_folds)
        .into_par_iter()
        .map(|k| {
            let train = fold_rows(k, false);
            let valid = fold_rows(k, true);
            let ens = boost(loss, features, &train, config)?;
            let mut sums = vec![0.0; valid.len()];
            let mut curve = Vec::with_capacity(config.n_trees + 1);
            let eval = |sums: &[f64]| {
                valid.iter().zip(sums).map(|(&r, s)| loss.loss(r, ens.base_score + ens.learning_rate * s)).sum::<f64>()
                    / valid.len() as f64
            };
            curve.push(eval(&sums));
            for m in 0..config.n_trees {
                if let Some(t) = ens.trees.get(m) {
                    for (s, &r) in sums.iter_mut().zip(&valid) {
                        *s += t.predict(features.row(r));
                    }
                }
                curve.push(eval(&sums));
            }
            Ok(curve)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let n_points = config.n_trees + 1;
    let kf = n_folds as f64;
    let mut mean = vec![0.0; n_points];
    let mut std_error = vec![0.0; n_points];
    for m in 0..n_points {
        let vals: Vec<f64> = fold_curves.iter().map(|c| c[m]).collect();
        mean[m] = vals.iter().sum::<f64>() / kf;
        let var = vals.iter().map(|v| (v - mean[m]).powi(2)).sum::<f64>() / (kf - 1.0);
        std_error[m] = (var / kf).sqrt();
    }
    let argmin = (0..n_points).fold(0, |best, m| if mean[m] < mean[best] { m } else { best });
    if !mean[argmin].is_finite() {
        return Err(Error::Numeric(
            "validation loss is not finite at any tree count; some held-out rows lie outside the loss support".into(),
        ));
    }
    let bound = mean[argmin] + std_error[argmin];
    let selected = (0..n_points).find(|&m| mean[m] <= bound).unwrap_or(argmin);
    Ok(CvResult { selected, mean, std_error, fold_curves })
}
