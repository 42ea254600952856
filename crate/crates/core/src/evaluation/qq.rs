use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, quantile_type7_sorted, sample_sd, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    /// Plotting position `i / (n + 1)`.
    pub prob: f64,
    pub model: f64,
    pub empirical: f64,
    pub lower: f64,
    pub upper: f64,
    /// Bootstrap mean and standard deviation of the order statistic.
    pub boot_mean: f64,
    pub boot_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqTable {
    pub xi: f64,
    pub level: f64,
    pub points: Vec<QqPoint>,
}

impl QqTable {
    pub fn fraction_inside(&self) -> f64 {
        let inside = self.points.iter().filter(|p| p.empirical >= p.lower && p.empirical <= p.upper).count();
        inside as f64 / self.points.len() as f64
    }

    /// Largest `|empirical - boot_mean| / boot_se` over the points.
    pub fn max_standardized_deviation(&self) -> f64 {
        self.points.iter().map(|p| (p.empirical - p.boot_mean).abs() / p.boot_se.max(1e-300)).fold(0.0, f64::max)
    }
}

pub(crate) fn gpd_unit_quantile(p: f64, xi: f64) -> f64 {
    if xi == 0.0 {
        -(-p).ln_1p()
    } else {
        ((-(-p).ln_1p() * xi).exp() - 1.0) / xi
    }
}

pub const MIN_QQ_EXCESSES: usize = 10;

/// Tail QQ table of excesses `e_t` with day-varying GPD scales `a_t` and
/// common shape `xi`. The scaled excesses `e_t / a_t` are compared with
/// GPD(1, xi) quantiles; pointwise bands come from `n_boot` parametric
/// bootstrap samples of the same size.
pub fn qq_tail(excesses: &[f64], scales: &[f64], xi: f64, n_boot: usize, level: f64, seed: u64) -> Result<QqTable> {
    if excesses.len() != scales.len() {
        return Err(Error::Data(format!("{} excesses but {} scales", excesses.len(), scales.len())));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("band level must lie in (0, 1), got {level}")));
    }
    if n_boot < 2 {
        return Err(Error::Config("qq_tail needs at least 2 bootstrap samples".into()));
    }
    let mut scaled = Vec::with_capacity(excesses.len());
    for (e, a) in excesses.iter().zip(scales) {
        if !(*a > 0.0) {
            return Err(Error::Data(format!("non-positive GPD scale {a}")));
        }
        if *e > 0.0 {
            scaled.push(e / a);
        }
    }
    let n = scaled.len();
    if n < MIN_QQ_EXCESSES {
        return Err(Error::Data(format!("{n} positive excesses, at least {MIN_QQ_EXCESSES} needed")));
    }
    scaled.sort_by(f64::total_cmp);
    if scaled[0] == scaled[n - 1] {
        return Err(Error::Data("all scaled excesses are equal".into()));
    }

    let boot: Vec<Vec<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let mut s: Vec<f64> = (0..n).map(|_| gpd_unit_quantile(rng.random::<f64>(), xi)).collect();
            s.sort_by(f64::total_cmp);
            s
        })
        .collect();
    let lo_p = 0.5 * (1.0 - level);
    let points = (0..n)
        .map(|i| {
            let mut col: Vec<f64> = boot.iter().map(|s| s[i]).collect();
            col.sort_by(f64::total_cmp);
            let prob = (i + 1) as f64 / (n + 1) as f64;
            QqPoint {
                prob,
                model: gpd_unit_quantile(prob, xi),
                empirical: scaled[i],
                lower: quantile_type7_sorted(&col, lo_p),
                upper: quantile_type7_sorted(&col, 1.0 - lo_p),
                boot_mean: mean(&col),
                boot_se: sample_sd(&col),
            }
        })
        .collect();
    Ok(QqTable { xi, level, points })
}
