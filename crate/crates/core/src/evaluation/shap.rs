//! Path-dependent TreeSHAP (Lundberg et al., 2018).
//!
//! Values are Shapley values of the game `v(S) = E[f(x) | x_S]`, where the
//! expectation over the features outside `S` follows the training cover of
//! each branch.

use serde::{Deserialize, Serialize};

use crate::boosting::{Node, RegressionTree, TreeEnsemble};
use crate::error::{Error, Result};
use crate::stats::quantile_type7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    pub base: f64,
    pub values: Vec<f64>,
}

impl ShapAttribution {
    pub fn total(&self) -> f64 {
        self.base + self.values.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement { feature, zero, one, weight: if depth == 0 { 1.0 } else { 0.0 } });
    let l = depth as f64;
    for i in (0..depth).rev() {
        let w = path[i].weight;
        path[i + 1].weight += one * w * (i as f64 + 1.0) / (l + 1.0);
        path[i].weight = zero * w * (l - i as f64) / (l + 1.0);
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let l = depth as f64;
    let PathElement { zero, one, .. } = path[index];
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * (l + 1.0) / ((i as f64 + 1.0) * one);
            next = tmp - path[i].weight * zero * (l - i as f64) / (l + 1.0);
        } else {
            path[i].weight = path[i].weight * (l + 1.0) / (zero * (l - i as f64));
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let l = depth as f64;
    let PathElement { zero, one, .. } = path[index];
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next * (l + 1.0) / ((i as f64 + 1.0) * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (l - i as f64) / (l + 1.0);
        } else if zero != 0.0 {
            total += path[i].weight / zero / ((l - i as f64) / (l + 1.0));
        }
    }
    total
}

fn goes_left(x: f64, threshold: f64, default_left: bool) -> bool {
    if x.is_nan() {
        default_left
    } else {
        x < threshold
    }
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &RegressionTree,
    node: usize,
    x: &[f64],
    phi: &mut [f64],
    mut path: Vec<PathElement>,
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    extend(&mut path, zero, one, feature);
    match &tree.nodes[node] {
        Node::Leaf { weight, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                if let Some(f) = el.feature {
                    phi[f] += w * (el.one - el.zero) * weight;
                }
            }
        }
        Node::Split { feature: f, threshold, left, right, default_left, cover, .. } => {
            let (hot, cold) =
                if goes_left(x[*f], *threshold, *default_left) { (*left, *right) } else { (*right, *left) };
            let hot_zero = tree.nodes[hot].cover() / cover;
            let cold_zero = tree.nodes[cold].cover() / cover;
            let (mut in_zero, mut in_one) = (1.0, 1.0);
            if let Some(k) = path.iter().position(|p| p.feature == Some(*f)) {
                in_zero = path[k].zero;
                in_one = path[k].one;
                unwind(&mut path, k);
            }
            recurse(tree, hot, x, phi, path.clone(), hot_zero * in_zero, in_one, Some(*f));
            recurse(tree, cold, x, phi, path, cold_zero * in_zero, 0.0, Some(*f));
        }
    }
}

/// Cover-weighted mean leaf value of a tree.
pub fn tree_expectation(tree: &RegressionTree) -> f64 {
    fn go(tree: &RegressionTree, i: usize) -> f64 {
        match &tree.nodes[i] {
            Node::Leaf { weight, .. } => *weight,
            Node::Split { left, right, cover, .. } => {
                (tree.nodes[*left].cover() * go(tree, *left) + tree.nodes[*right].cover() * go(tree, *right)) / cover
            }
        }
    }
    go(tree, 0)
}

/// Attributions of a single tree's output.
pub fn tree_shap_single(tree: &RegressionTree, x: &[f64], n_features: usize) -> ShapAttribution {
    let mut phi = vec![0.0; n_features];
    recurse(tree, 0, x, &mut phi, Vec::new(), 1.0, 1.0, None);
    ShapAttribution { base: tree_expectation(tree), values: phi }
}

/// SHAP values of an ensemble prediction at `x`. Local accuracy
/// `base + sum(values) = predict(x)` is checked to `1e-9`.
pub fn tree_shap(ensemble: &TreeEnsemble, x: &[f64]) -> Result<ShapAttribution> {
    let p = ensemble.n_features();
    if x.len() != p {
        return Err(Error::Data(format!("predictor vector of length {} for {p} features", x.len())));
    }
    let mut values = vec![0.0; p];
    let mut base = ensemble.base_score;
    let lr = ensemble.learning_rate;
    for tree in &ensemble.trees {
        let a = tree_shap_single(tree, x, p);
        base += lr * a.base;
        for (v, t) in values.iter_mut().zip(&a.values) {
            *v += lr * t;
        }
    }
    let attribution = ShapAttribution { base, values };
    let pred = ensemble.predict(x)?;
    let gap = (attribution.total() - pred).abs();
    if gap > 1e-9 * (1.0 + pred.abs()) {
        return Err(Error::Numeric(format!("SHAP local accuracy violated by {gap:e}")));
    }
    Ok(attribution)
}

/// Mean absolute attribution per grid point over the days whose prediction
/// is in the top `top_fraction` (`1.0` keeps every day).
///
/// `feature_points[f]` is the grid point of feature `f`, or `None` for
/// features not tied to the grid.
pub fn region_shap_summary(
    attributions: &[ShapAttribution],
    predictions: &[f64],
    feature_points: &[Option<usize>],
    n_points: usize,
    top_fraction: f64,
) -> Result<Vec<f64>> {
    if attributions.len() != predictions.len() {
        return Err(Error::Data(format!("{} attributions but {} predictions", attributions.len(), predictions.len())));
    }
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::Config(format!("top fraction must lie in (0, 1], got {top_fraction}")));
    }
    let mut sums = vec![0.0; n_points];
    if attributions.is_empty() {
        return Ok(sums);
    }
    let cut = quantile_type7(predictions, 1.0 - top_fraction);
    let selected: Vec<&ShapAttribution> =
        attributions.iter().zip(predictions).filter(|(_, &p)| p >= cut).map(|(a, _)| a).collect();
    for a in &selected {
        if a.values.len() != feature_points.len() {
            return Err(Error::Data("attribution length does not match the feature map".into()));
        }
        for (v, fp) in a.values.iter().zip(feature_points) {
            if let Some(pt) = fp {
                if *pt >= n_points {
                    return Err(Error::Data(format!("feature mapped to grid point {pt} of {n_points}")));
                }
                sums[*pt] += v.abs();
            }
        }
    }
    let n = selected.len() as f64;
    sums.iter_mut().for_each(|s| *s /= n);
    Ok(sums)
}
