use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::GriddedDataset;
use crate::losses::{gpd_mle, GpdMethod};
use crate::risk::RiskFunctional;
use crate::stats::{quantile_type7, quantile_type7_sorted};

pub const MIN_THRESHOLD_DAYS: usize = 100;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub risk_level: f64,
    /// Minimum index gap between kept exceedance days; 0 keeps every day.
    pub decluster_gap: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { risk_level: 0.95, decluster_gap: 0 }
    }
}

/// Risk threshold `u`, marginal thresholds `b` with `r(b) = u`, and the
/// per-point GPD fits that give the upper-bound corrections `m`.
///
/// `m_d = -sigma_hat_d / xi_hat_d` is the fitted upper end point of the
/// excesses when `xi_hat_d < 0` and 0 otherwise. With `xi < 0` the scale
/// `exp(theta) - m_d xi` then keeps every excess up to that end point inside
/// the support for any `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub target_region: Vec<usize>,
    pub risk_level: f64,
    pub u: f64,
    pub q_prime: f64,
    pub b: Vec<f64>,
    pub m: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub xi_hat: Vec<f64>,
    pub gpd_method: Vec<GpdMethod>,
    /// Number of positive excesses per point.
    pub n_excesses: Vec<usize>,
    /// Indices of the exceedance days in the series these thresholds were selected on.
    pub exceedance_days: Vec<usize>,
}

impl ThresholdSpec {
    pub fn risk(&self) -> Result<RiskFunctional> {
        RiskFunctional::target_region(self.b.len(), &self.target_region)
    }
}

/// Mean of the response over the target region, one value per day.
pub fn compute_risk_series(response: &[Vec<f64>], target_region: &[usize]) -> Result<Vec<f64>> {
    let d = response.first().map_or(0, Vec::len);
    let risk = RiskFunctional::target_region(d, target_region)?;
    Ok(response.iter().map(|y| risk.apply(y)).collect())
}

pub fn dataset_risk_series(ds: &GriddedDataset, response: &str, target_region: &[usize]) -> Result<Vec<f64>> {
    let risk = RiskFunctional::target_region(ds.grid.len(), target_region)?;
    Ok(ds.variable(response)?.iter().map(|y| risk.apply(y)).collect())
}

fn decluster(days: Vec<usize>, gap: usize) -> Vec<usize> {
    if gap == 0 {
        return days;
    }
    let mut kept: Vec<usize> = Vec::with_capacity(days.len());
    for t in days {
        if kept.last().is_none_or(|&prev| t - prev > gap) {
            kept.push(t);
        }
    }
    kept
}

/// Select `u`, the exceedance days and the calibrated marginal thresholds.
pub fn select_thresholds(
    response: &[Vec<f64>],
    target_region: &[usize],
    config: &ThresholdConfig,
) -> Result<ThresholdSpec> {
    let n = response.len();
    if n < MIN_THRESHOLD_DAYS {
        return Err(Error::Data(format!("threshold selection needs at least {MIN_THRESHOLD_DAYS} days, got {n}")));
    }
    if !(config.risk_level > 0.0 && config.risk_level < 1.0) {
        return Err(Error::Config(format!("risk_level must lie in (0, 1), got {}", config.risk_level)));
    }
    let d = response[0].len();
    if let Some(t) = response.iter().position(|y| y.len() != d || y.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!("response on day {t} is incomplete or non-finite")));
    }
    let risk = RiskFunctional::target_region(d, target_region)?;
    let series: Vec<f64> = response.iter().map(|y| risk.apply(y)).collect();
    let u = quantile_type7(&series, config.risk_level);
    let days = decluster((0..n).filter(|&t| series[t] >= u).collect(), config.decluster_gap);

    let columns: Vec<Vec<f64>> = (0..d)
        .map(|s| {
            let mut c: Vec<f64> = days.iter().map(|&t| response[t][s]).collect();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    let b_at = |q: f64| -> Vec<f64> { columns.iter().map(|c| quantile_type7_sorted(c, q)).collect() };
    let tol = 1e-9 * (1.0 + u.abs());

    let spatially_constant = response.iter().all(|y| y.iter().all(|v| *v == y[0]));
    let (q_prime, b) = if spatially_constant {
        (config.risk_level, vec![u; d])
    } else {
        let (lo_r, hi_r) = (risk.apply(&b_at(0.0)), risk.apply(&b_at(1.0)));
        if lo_r - u > tol || u - hi_r > tol {
            return Err(Error::Numeric(format!(
                "cannot calibrate marginal thresholds: r(b(q')) ranges over [{lo_r}, {hi_r}] but u = {u}"
            )));
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut q = if (lo_r - u).abs() <= tol { 0.0 } else { 1.0 };
        if (lo_r - u).abs() > tol && (hi_r - u).abs() > tol {
            for _ in 0..MAX_BISECTIONS {
                q = 0.5 * (lo + hi);
                let f = risk.apply(&b_at(q)) - u;
                if f.abs() <= tol {
                    break;
                }
                if f < 0.0 {
                    lo = q;
                } else {
                    hi = q;
                }
            }
        }
        let b = b_at(q);
        let miss = (risk.apply(&b) - u).abs();
        if miss > tol {
            return Err(Error::Numeric(format!("threshold bisection stalled with |r(b) - u| = {miss}")));
        }
        (q, b)
    };

    let mut sigma_hat = Vec::with_capacity(d);
    let mut xi_hat = Vec::with_capacity(d);
    let mut gpd_method = Vec::with_capacity(d);
    let mut n_excesses = Vec::with_capacity(d);
    for s in 0..d {
        let excess: Vec<f64> = days.iter().map(|&t| response[t][s] - b[s]).filter(|e| *e > 0.0).collect();
        let fit = gpd_mle(&excess).map_err(|e| Error::Data(format!("GPD fit at grid point {s}: {e}")))?;
        sigma_hat.push(fit.sigma);
        xi_hat.push(fit.xi);
        gpd_method.push(fit.method);
        n_excesses.push(excess.len());
    }
    let m = sigma_hat.iter().zip(&xi_hat).map(|(s, x)| if *x < 0.0 { -s / x } else { 0.0 }).collect();
    Ok(ThresholdSpec {
        target_region: risk.region(),
        risk_level: config.risk_level,
        u,
        q_prime,
        b,
        m,
        sigma_hat,
        xi_hat,
        gpd_method,
        n_excesses,
        exceedance_days: days,
    })
}
