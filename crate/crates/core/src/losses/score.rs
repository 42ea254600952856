//! Gradient score of the Brown–Resnick r-Pareto intensity, boosted in
//! `theta_extent` with `alpha` and `theta_scale` held fixed.
//!
//! With weight `w_d(z) = z` the score of one day is
//! `S = sum_d [w_d^2 (d_d ln lambda)^2 + 2 d_d (w_d^2 d_d ln lambda)]`,
//! i.e. the log-density form of the gradient score, which avoids forming
//! `lambda` itself. Substituting the reference-form derivatives gives
//!
//! `S = sum_{i != r0} v_i^2 + (sum_i v_i - 1)^2 - D - 2 (tr Q + 1^T Q 1)`
//!
//! with `v = Q y`. Since `gamma` scales as `exp(-alpha theta)`, the precision
//! at `theta` is `e Q0` with `e = exp(alpha theta)`, and
//! `v = e Q0 L + Q0 g0` where `L` are the log-ratios and `g0` the
//! semivariogram to `r0` at `theta = 0`. Both products are computed once per
//! day, so each evaluation of `(S, dS/dtheta, d2S/dtheta2)` costs `O(D)`.
//!
//! Sites with `z_d = 0` carry zero weight and are dropped; the day is scored
//! on the sub-grid of its positive sites.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::intensity::br_intensity;
use crate::boosting::{init_estimate, LossAdapter};
use crate::brown_resnick::{vecchia_factorize, CovarianceModel, DenseCovariance, Precision};
use crate::error::{Error, Result};
use crate::spatial::{maximin_ordering, Grid, SemivariogramParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PrecisionMethod {
    Dense,
    Vecchia { k: usize },
}

/// Fixed ingredients of the dependence score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSetup {
    pub grid: Grid,
    pub alpha: f64,
    pub theta_scale: f64,
    pub method: PrecisionMethod,
}

/// Precision of the pinned covariance at `theta_extent = 0`.
pub fn build_precision(
    grid: &Grid,
    params: SemivariogramParams,
    method: PrecisionMethod,
) -> Result<(CovarianceModel, Box<dyn Precision + Send>)> {
    let r0 = maximin_ordering(grid)?.permutation[0];
    let model = CovarianceModel::new(grid, params, r0)?;
    let prec: Box<dyn Precision + Send> = match method {
        PrecisionMethod::Dense => Box::new(DenseCovariance::new(model.clone())?),
        PrecisionMethod::Vecchia { k } => {
            if k + 1 >= grid.len() {
                Box::new(DenseCovariance::new(model.clone())?)
            } else {
                Box::new(vecchia_factorize(&model, k)?)
            }
        }
    };
    Ok((model, prec))
}

/// Per active-site pattern: sites, reference, `Q0 g0` and `tr Q0 + 1^T Q0 1`.
struct Pattern {
    sites: Vec<usize>,
    r0: usize,
    prec: Option<Box<dyn Precision + Send>>,
    q: Vec<f64>,
    k_const: f64,
}

impl Pattern {
    fn new(grid: &Grid, sites: Vec<usize>, setup: &ScoreSetup) -> Result<Self> {
        if sites.len() < 2 {
            return Ok(Self { sites, r0: 0, prec: None, q: Vec::new(), k_const: 0.0 });
        }
        let sub = if sites.len() == grid.len() { grid.clone() } else { grid.subset(&sites)? };
        let params = SemivariogramParams::new(setup.alpha, 0.0, setup.theta_scale)?;
        let (model, prec) = build_precision(&sub, params, setup.method)?;
        let q = prec.mul(model.gamma_ref());
        let k_const = prec.diag().iter().sum::<f64>() + prec.total();
        Ok(Self { sites, r0: model.reference(), prec: Some(prec), q, k_const })
    }

    fn day_terms(&self, z: &[f64]) -> Vec<f64> {
        let Some(prec) = &self.prec else { return Vec::new() };
        let lz: Vec<f64> = self.sites.iter().map(|&s| z[s].ln()).collect();
        let l: Vec<f64> = lz.iter().map(|v| v - lz[self.r0]).collect();
        prec.mul(&l)
    }
}

/// `(S, dS/dtheta, d2S/dtheta2)` from precomputed `p = Q0 L`, `q = Q0 g0`.
fn score_from_terms(p: &[f64], q: &[f64], k_const: f64, alpha: f64, theta: f64) -> (f64, f64, f64) {
    let n = p.len();
    if n < 2 {
        return (0.0, 0.0, 0.0);
    }
    let e = (alpha * theta).exp();
    let ae = alpha * e;
    let (mut sq, mut sum_v, mut sum_p) = (0.0, 0.0, 0.0);
    let (mut g_sq, mut h_sq) = (0.0, 0.0);
    for i in 0..n {
        let v = e * p[i] + q[i];
        sq += v * v;
        sum_v += v;
        sum_p += p[i];
        g_sq += 2.0 * v * ae * p[i];
        h_sq += 2.0 * (ae * p[i]).powi(2) + 2.0 * v * alpha * ae * p[i];
    }
    let s1 = sum_v - 1.0;
    let loss = sq + s1 * s1 - n as f64 - 2.0 * e * k_const;
    let g = g_sq + 2.0 * s1 * ae * sum_p - 2.0 * ae * k_const;
    let h = h_sq + 2.0 * (ae * sum_p).powi(2) + 2.0 * s1 * alpha * ae * sum_p - 2.0 * alpha * ae * k_const;
    (loss, g, h)
}

/// `(dS/dtheta, (alpha e)^2 d2S/de2)` with `e = exp(alpha theta)`. The score
/// is a convex quadratic in `e` but not convex in `theta`; the second entry
/// is the curvature in `e` carried over to `theta`, which is positive and
/// equals `d2S/dtheta2` wherever `dS/dtheta = 0`.
fn score_newton_terms(p: &[f64], q: &[f64], k_const: f64, alpha: f64, theta: f64) -> (f64, f64) {
    if p.len() < 2 {
        return (0.0, 0.0);
    }
    let (_, g, _) = score_from_terms(p, q, k_const, alpha, theta);
    let ae = alpha * (alpha * theta).exp();
    let sum_sq: f64 = p.iter().map(|v| v * v).sum();
    let sum_p: f64 = p.iter().sum();
    (g, 2.0 * ae * ae * (sum_sq + sum_p * sum_p))
}

fn validate_z(z: &[f64], d: usize) -> Result<()> {
    if z.len() != d {
        return Err(Error::Data(format!("dependence field has {} values for {d} sites", z.len())));
    }
    if let Some(i) = z.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Data(format!("dependence field must be finite and >= 0, got z[{i}] = {}", z[i])));
    }
    Ok(())
}

/// Score of one day at `theta_extent` with derivatives in `theta_extent`.
pub fn grp_gradient_score(z: &[f64], theta_extent: f64, setup: &ScoreSetup) -> Result<(f64, f64, f64)> {
    validate_z(z, setup.grid.len())?;
    let sites: Vec<usize> = (0..z.len()).filter(|&i| z[i] > 0.0).collect();
    let pat = Pattern::new(&setup.grid, sites, setup)?;
    let p = pat.day_terms(z);
    Ok(score_from_terms(&p, &pat.q, pat.k_const, setup.alpha, theta_extent))
}

/// Same score evaluated directly from `d ln lambda` and `d2 ln lambda` at
/// the full covariance for `theta_extent` (no rescaling shortcut). All
/// sites must be positive.
pub fn gradient_score_direct(z: &[f64], model: &CovarianceModel, prec: &dyn Precision) -> Result<f64> {
    let ev = br_intensity(z, model, prec)?;
    Ok((0..z.len())
        .map(|d| {
            let a = z[d] * ev.grad_log[d];
            let b = z[d] * z[d] * ev.hess_log_diag[d];
            a * a + 4.0 * a + 2.0 * b
        })
        .sum())
}

/// Dependence loss with one row per exceedance day.
pub struct GrpScoreLoss {
    alpha: f64,
    patterns: Vec<Pattern>,
    days: Vec<(usize, Vec<f64>)>,
}

impl std::fmt::Debug for GrpScoreLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrpScoreLoss").field("alpha", &self.alpha).field("days", &self.days.len()).finish()
    }
}

impl GrpScoreLoss {
    pub fn new(z_days: &[Vec<f64>], setup: &ScoreSetup) -> Result<Self> {
        let d = setup.grid.len();
        let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
        let mut patterns = Vec::new();
        let mut day_pattern = Vec::with_capacity(z_days.len());
        for (t, z) in z_days.iter().enumerate() {
            validate_z(z, d).map_err(|e| Error::Data(format!("day {t}: {e}")))?;
            let key: Vec<bool> = z.iter().map(|v| *v > 0.0).collect();
            let idx = match index.get(&key) {
                Some(&i) => i,
                None => {
                    let sites = (0..d).filter(|&i| key[i]).collect();
                    let pat = Pattern::new(&setup.grid, sites, setup)
                        .map_err(|e| Error::Numeric(format!("dependence precision for day {t}: {e}")))?;
                    patterns.push(pat);
                    index.insert(key, patterns.len() - 1);
                    patterns.len() - 1
                }
            };
            day_pattern.push(idx);
        }
        let days =
            z_days.par_iter().zip(day_pattern.par_iter()).map(|(z, &pi)| (pi, patterns[pi].day_terms(z))).collect();
        Ok(Self { alpha: setup.alpha, patterns, days })
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    /// `(S, dS/dtheta, d2S/dtheta2)` of day `row`.
    pub fn evaluate(&self, row: usize, theta: f64) -> (f64, f64, f64) {
        let (pi, p) = &self.days[row];
        let pat = &self.patterns[*pi];
        score_from_terms(p, &pat.q, pat.k_const, self.alpha, theta)
    }
}

impl LossAdapter for GrpScoreLoss {
    fn n_rows(&self) -> usize {
        self.days.len()
    }

    fn loss(&self, row: usize, pred: f64) -> f64 {
        self.evaluate(row, pred).0
    }

    fn grad_hess(&self, row: usize, pred: f64) -> (f64, f64) {
        let (_, g, h) = self.evaluate(row, pred);
        (g, h)
    }

    fn newton_grad_hess(&self, row: usize, pred: f64) -> (f64, f64) {
        let (pi, p) = &self.days[row];
        let pat = &self.patterns[*pi];
        score_newton_terms(p, &pat.q, pat.k_const, self.alpha, pred)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefitResult {
    pub alpha: f64,
    pub theta_scale: f64,
    pub theta_extent: f64,
    /// Mean score per day at the estimate.
    pub score: f64,
}

/// Unconditional minimum-score estimates of `(alpha, theta_scale,
/// theta_extent)`: grid search over `(alpha, theta_scale)` with
/// `theta_extent` profiled out, then golden-section refinement of each
/// coordinate around the best grid cell.
pub fn prefit_dependence(
    z_days: &[Vec<f64>],
    grid: &Grid,
    method: PrecisionMethod,
    alpha_grid: &[f64],
    scale_grid: &[f64],
) -> Result<PrefitResult> {
    if z_days.is_empty() {
        return Err(Error::Data("dependence prefit needs at least one day".into()));
    }
    if alpha_grid.is_empty() || scale_grid.is_empty() {
        return Err(Error::Config("prefit grids must be nonempty".into()));
    }
    let rows: Vec<usize> = (0..z_days.len()).collect();
    let profile = |alpha: f64, theta_scale: f64| -> Result<(f64, f64)> {
        let setup = ScoreSetup { grid: grid.clone(), alpha, theta_scale, method };
        let loss = GrpScoreLoss::new(z_days, &setup)?;
        let theta = init_estimate(&loss, &rows)?;
        let total: f64 = rows.iter().map(|&r| loss.loss(r, theta)).sum();
        Ok((total / rows.len() as f64, theta))
    };
    let mut best = (f64::INFINITY, 0.0, alpha_grid[0], scale_grid[0]);
    for &a in alpha_grid {
        for &s in scale_grid {
            let (v, t) = profile(a, s)?;
            if v < best.0 {
                best = (v, t, a, s);
            }
        }
    }
    let neighbours = |grid: &[f64], v: f64| -> (f64, f64) {
        let mut sorted = grid.to_vec();
        sorted.sort_by(f64::total_cmp);
        let i = sorted.iter().position(|x| *x == v).unwrap_or(0);
        let lo = if i > 0 { sorted[i - 1] } else { v };
        let hi = if i + 1 < sorted.len() { sorted[i + 1] } else { v };
        (lo, hi)
    };
    let (mut a, mut s) = (best.2, best.3);
    let golden = |lo: f64, hi: f64, f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..30 {
            if hi - lo < 1e-4 {
                break;
            }
            let c = hi - phi * (hi - lo);
            let d = lo + phi * (hi - lo);
            if f(c)? <= f(d)? {
                hi = d;
            } else {
                lo = c;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    for _ in 0..2 {
        let (lo, hi) = neighbours(alpha_grid, best.2);
        if hi > lo {
            let cand = golden(lo.max(1e-3), hi.min(2.0), &|x| Ok(profile(x, s)?.0))?;
            let (v, _) = profile(cand, s)?;
            if v < profile(a, s)?.0 {
                a = cand;
            }
        }
        let (lo, hi) = neighbours(scale_grid, best.3);
        if hi > lo {
            let cand = golden(lo, hi, &|x| Ok(profile(a, x)?.0))?;
            let (v, _) = profile(a, cand)?;
            if v < profile(a, s)?.0 {
                s = cand;
            }
        }
    }
    let (score, theta_extent) = profile(a, s)?;
    Ok(PrefitResult { alpha: a, theta_scale: s, theta_extent, score })
}
