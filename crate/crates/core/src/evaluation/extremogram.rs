use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::Grid;
use crate::stats::quantile_type7;

pub const MIN_EXTREMOGRAM_DAYS: usize = 20;

/// Empirical conditional exceedance frequency of site `s2` given site `s1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremogramPair {
    pub s1: usize,
    pub s2: usize,
    pub distance: f64,
    pub estimate: f64,
    pub n_conditioning: usize,
}

/// Empirical extremogram over all pairs `s1 < s2` of fields observed on
/// exceedance days. Each site is thresholded at its own type-7 q-quantile;
/// the estimate is `#{Y_s1 > u_s1, Y_s2 > u_s2} / #{Y_s1 > u_s1}`. Pairs with
/// no conditioning exceedance are skipped.
pub fn extremogram(fields: &[Vec<f64>], grid: &Grid, q: f64) -> Result<Vec<ExtremogramPair>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("q must lie in (0, 1), got {q}")));
    }
    if fields.len() < MIN_EXTREMOGRAM_DAYS {
        return Err(Error::Data(format!("{} exceedance days, at least {MIN_EXTREMOGRAM_DAYS} needed", fields.len())));
    }
    let d = grid.len();
    if let Some(f) = fields.iter().find(|f| f.len() != d) {
        return Err(Error::Data(format!("field of length {} on a grid of {d} points", f.len())));
    }
    let exceed: Vec<Vec<bool>> = (0..d)
        .map(|s| {
            let col: Vec<f64> = fields.iter().map(|f| f[s]).collect();
            let u = quantile_type7(&col, q);
            col.iter().map(|&v| v > u).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    for s1 in 0..d {
        let n1 = exceed[s1].iter().filter(|&&e| e).count();
        if n1 == 0 {
            continue;
        }
        for s2 in s1 + 1..d {
            let both = exceed[s1].iter().zip(&exceed[s2]).filter(|(a, b)| **a && **b).count();
            let (p1, p2) = (grid.point(s1), grid.point(s2));
            out.push(ExtremogramPair {
                s1,
                s2,
                distance: (p1.x - p2.x).hypot(p1.y - p2.y),
                estimate: both as f64 / n1 as f64,
                n_conditioning: n1,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub lower: f64,
    pub upper: f64,
    pub mean: f64,
    pub n_pairs: usize,
}

/// Average estimates over distance bins `[edges[i], edges[i+1])`.
pub fn bin_by_distance(pairs: &[ExtremogramPair], edges: &[f64]) -> Vec<DistanceBin> {
    edges
        .windows(2)
        .map(|w| {
            let inside: Vec<f64> =
                pairs.iter().filter(|p| p.distance >= w[0] && p.distance < w[1]).map(|p| p.estimate).collect();
            let mean = if inside.is_empty() { f64::NAN } else { inside.iter().sum::<f64>() / inside.len() as f64 };
            DistanceBin { lower: w[0], upper: w[1], mean, n_pairs: inside.len() }
        })
        .collect()
}
