use rayon::prelude::*;

use super::tree::{fit_tree_presorted, SortedColumns};
use super::{FeatureMatrix, LossAdapter, RegressionTree, TrainConfig, TreeEnsemble};
use crate::error::{Error, Result};

const MAX_STEP_HALVINGS: usize = 30;
const DIVERGENCE_LIMIT: f64 = 1e8;

fn mean_loss(loss: &dyn LossAdapter, rows: &[usize], theta: f64) -> f64 {
    rows.iter().map(|&r| loss.loss(r, theta)).sum::<f64>() / rows.len() as f64
}

fn mean_grad_hess(loss: &dyn LossAdapter, rows: &[usize], theta: f64) -> (f64, f64) {
    let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| {
        let (gi, hi) = loss.grad_hess(r, theta);
        (g + gi, h + hi)
    });
    (g / rows.len() as f64, h / rows.len() as f64)
}

/// Constant minimizing the summed loss over `rows`: bracket the root of the
/// mean gradient, then safeguarded Newton with bisection fallback. Points
/// outside the loss support act as bracket ends.
pub fn init_estimate(loss: &dyn LossAdapter, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Data("init_estimate needs at least one row".into()));
    }
    let feasible = |t: f64| mean_loss(loss, rows, t).is_finite();
    let start = std::iter::once(0.0)
        .chain((0..=10).flat_map(|k| {
            let s = f64::powi(2.0, k);
            [s, -s]
        }))
        .find(|&t| feasible(t))
        .ok_or_else(|| Error::Config("loss is infinite at every trial initial value".into()))?;

    // a small gradient alone is not enough: losses that decrease towards an
    // asymptote (all-positive log loss) have vanishing gradient and hessian
    let tol_met = |t: f64, g: f64, h: f64| {
        let tol = 1e-8 * (1.0 + t.abs());
        h > 0.0 && g.abs() <= tol && g.abs() <= 100.0 * tol * h
    };
    let (g0, h0) = mean_grad_hess(loss, rows, start);
    if tol_met(start, g0, h0) {
        return Ok(start);
    }
    // bracket [lo, hi] with G(lo) < 0 < G(hi); infeasible ends count as signed
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let mut inside = start;
    let mut step = 1.0_f64.max(start.abs());
    let outside = loop {
        let t = inside + dir * step;
        if t.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Config(format!(
                "loss has no finite minimizer: the gradient keeps the same sign up to |theta| = {DIVERGENCE_LIMIT:e}"
            )));
        }
        if !feasible(t) {
            break t;
        }
        let (g, h) = mean_grad_hess(loss, rows, t);
        if tol_met(t, g, h) {
            return Ok(t);
        }
        if g * dir > 0.0 {
            break t;
        }
        inside = t;
        step *= 2.0;
    };
    let (mut lo, mut hi) = if dir > 0.0 { (inside, outside) } else { (outside, inside) };
    let mut theta = inside;
    for _ in 0..500 {
        let (g, h) = mean_grad_hess(loss, rows, theta);
        if tol_met(theta, g, h) || hi - lo <= 1e-10 {
            return Ok(theta);
        }
        let newton = theta - g / h;
        let mut next = if h > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if !feasible(next) {
            next = 0.5 * (lo + hi);
        }
        if !feasible(next) {
            // infeasible midpoint: the support boundary lies on the side of
            // the infeasible bracket end
            if feasible(lo) {
                hi = next;
            } else {
                lo = next;
            }
            theta = if feasible(lo) { lo } else { hi };
            continue;
        }
        let (gn, _) = mean_grad_hess(loss, rows, next);
        if gn < 0.0 {
            lo = next;
        } else {
            hi = next;
        }
        theta = next;
    }
    Ok(theta)
}

/// Fit an ensemble on `rows` (indices into both `loss` and `features`).
pub fn boost(
    loss: &dyn LossAdapter,
    features: &FeatureMatrix,
    rows: &[usize],
    config: &TrainConfig,
) -> Result<TreeEnsemble> {
    Ok(boost_traced(loss, features, rows, config)?.0)
}

/// As [`boost`], also returning the summed training loss after each
/// iteration (entry 0 is the initial constant).
///
/// A step that leaves the loss support is halved (leaf weights scaled) until
/// the loss is finite again; any increase of the training loss is logged.
pub fn boost_traced(
    loss: &dyn LossAdapter,
    features: &FeatureMatrix,
    rows: &[usize],
    config: &TrainConfig,
) -> Result<(TreeEnsemble, Vec<f64>)> {
    config.validate()?;
    if rows.is_empty() {
        return Err(Error::Data("boosting needs at least one row".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= features.n_rows() || r >= loss.n_rows()) {
        return Err(Error::Data(format!("row {bad} is outside the predictor matrix or loss")));
    }
    let base = init_estimate(loss, rows)?;
    let mut ensemble = TreeEnsemble::constant(base, config.learning_rate, features.names().to_vec());
    let lr = config.learning_rate;
    let mut sums = vec![0.0; rows.len()];
    let mut preds = vec![base; rows.len()];
    let mut current = loss.total_loss(rows, &preds);
    let mut history = vec![current];
    if config.n_trees == 0 {
        return Ok((ensemble, history));
    }
    let cols = SortedColumns::new(features, rows);

    for iteration in 0..config.n_trees {
        let gh: Vec<(f64, f64)> =
            rows.par_iter().zip(preds.par_iter()).map(|(&r, &p)| loss.newton_grad_hess(r, p)).collect();
        if let Some(i) = gh.iter().position(|(g, h)| !g.is_finite() || !h.is_finite()) {
            return Err(Error::NonFiniteGradient { row: rows[i], iteration });
        }
        let g: Vec<f64> = gh.iter().map(|p| p.0).collect();
        let h: Vec<f64> = gh.iter().map(|p| p.1.max(config.hessian_floor)).collect();
        let mut tree = fit_tree_presorted(features, &cols, &g, &h, config)?;

        let mut halvings = 0;
        let (new_sums, new_preds, new_loss) = loop {
            let (s, p, l) = step(loss, features, rows, &sums, base, lr, &tree);
            if l.is_finite() {
                break (s, p, l);
            }
            if halvings == MAX_STEP_HALVINGS {
                return Err(Error::Numeric(format!(
                    "boosting iteration {iteration}: loss stays infinite after {MAX_STEP_HALVINGS} step halvings"
                )));
            }
            tree.scale_leaves(0.5);
            halvings += 1;
        };
        if halvings > 0 {
            log::debug!("iteration {iteration}: step halved {halvings} times to stay in the loss support");
        }
        if new_loss > current + 1e-12 * current.abs() {
            log::warn!("iteration {iteration}: training loss increased from {current} to {new_loss}");
        }
        sums = new_sums;
        preds = new_preds;
        current = new_loss;
        history.push(current);
        ensemble.trees.push(tree);
    }
    Ok((ensemble, history))
}

fn step(
    loss: &dyn LossAdapter,
    features: &FeatureMatrix,
    rows: &[usize],
    sums: &[f64],
    base: f64,
    lr: f64,
    tree: &RegressionTree,
) -> (Vec<f64>, Vec<f64>, f64) {
    let new_sums: Vec<f64> =
        rows.par_iter().zip(sums.par_iter()).map(|(&r, &s)| s + tree.predict(features.row(r))).collect();
    let preds: Vec<f64> = new_sums.iter().map(|s| base + lr * s).collect();
    let l = loss.total_loss(rows, &preds);
    (new_sums, preds, l)
}
