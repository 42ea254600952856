//! Synthetic predictor fields and dependence drivers for tests, the
//! recovery study and the `synth-data` command.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{ilogit, stream_rng};

/// Smooth Gaussian predictor fields on an `nx x ny` lattice: a few random
/// planar waves with day-specific amplitudes plus small white noise, each
/// column standardized. Rows are days.
pub fn smooth_fields(n_days: usize, nx: usize, ny: usize, seed: u64) -> Vec<Vec<f64>> {
    const MODES: usize = 6;
    let mut rng = stream_rng(seed, 0x5A);
    let waves: Vec<(f64, f64, f64)> = (0..MODES)
        .map(|_| {
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let freq = 0.15 + 0.5 * rng.random::<f64>();
            (freq * angle.cos(), freq * angle.sin(), rng.random::<f64>() * std::f64::consts::TAU)
        })
        .collect();
    let p = nx * ny;
    let mut days: Vec<Vec<f64>> = (0..n_days)
        .map(|_| {
            let amp: Vec<f64> = (0..MODES).map(|_| rng.sample(StandardNormal)).collect();
            (0..p)
                .map(|c| {
                    let (x, y) = ((c % nx) as f64, (c / nx) as f64);
                    let signal: f64 =
                        waves.iter().zip(&amp).map(|((kx, ky, ph), a)| a * (kx * x + ky * y + ph).cos()).sum();
                    signal + 0.3 * rng.sample::<f64, _>(StandardNormal)
                })
                .collect()
        })
        .collect();
    if n_days > 1 {
        for c in 0..p {
            let m = days.iter().map(|d| d[c]).sum::<f64>() / n_days as f64;
            let v = days.iter().map(|d| (d[c] - m).powi(2)).sum::<f64>() / (n_days - 1) as f64;
            let s = v.sqrt().max(1e-12);
            days.iter_mut().for_each(|d| d[c] = (d[c] - m) / s);
        }
    }
    days
}

/// `theta = lo + (hi - lo) * ilogit(1.5 x_a + x_b^2 - 1)`: a smooth bounded
/// nonlinearity of two predictor columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtentDriver {
    pub col_a: usize,
    pub col_b: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for ExtentDriver {
    fn default() -> Self {
        Self { col_a: 40, col_b: 170, lo: 0.2, hi: 3.0 }
    }
}

impl ExtentDriver {
    pub fn validate(&self, n_columns: usize) -> Result<()> {
        if self.col_a >= n_columns || self.col_b >= n_columns {
            return Err(Error::Config(format!(
                "driver columns ({}, {}) outside {n_columns} predictors",
                self.col_a, self.col_b
            )));
        }
        if !(self.lo < self.hi) {
            return Err(Error::Config("driver range must satisfy lo < hi".into()));
        }
        Ok(())
    }

    pub fn theta(&self, x: &[f64]) -> f64 {
        let (a, b) = (x[self.col_a], x[self.col_b]);
        self.lo + (self.hi - self.lo) * ilogit(1.5 * a + b * b - 1.0)
    }
}

/// Layout of the synthetic raw dataset used by `synth-data` and the
/// end-to-end tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthDataConfig {
    pub nx: usize,
    pub ny: usize,
    pub start_year: i32,
    pub n_years: usize,
    /// Z500 column whose sign drives the spatial coherence of T2M.
    pub coherence_column: usize,
}

impl Default for SynthDataConfig {
    fn default() -> Self {
        Self { nx: 8, ny: 5, start_year: 1990, n_years: 30, coherence_column: 12 }
    }
}

fn ar1_fields(n_days: usize, nx: usize, ny: usize, phi: f64, seed: u64) -> Vec<Vec<f64>> {
    let innov = smooth_fields(n_days, nx, ny, seed);
    let c = (1.0 - phi * phi).sqrt();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n_days);
    for (t, e) in innov.into_iter().enumerate() {
        let next = if t == 0 { e } else { out[t - 1].iter().zip(&e).map(|(p, v)| phi * p + c * v).collect() };
        out.push(next);
    }
    out
}

/// Raw daily `t2m`, `z500` and `sm` on May to August of each year, with
/// seasonal cycles and linear trends. The Gaussian T2M anomaly loads on
/// same-day Z500 and SM, plus a noise field whose spatial coherence rises
/// with Z500 at `coherence_column`; it is then mapped through the GPD
/// quantile function with shape -0.3, so every point has a bounded upper
/// tail of that shape.
pub fn synthetic_dataset(config: &SynthDataConfig, seed: u64) -> Result<crate::io::GriddedDataset> {
    use chrono::{Datelike, NaiveDate};

    let d = config.nx * config.ny;
    if d < 2 || config.n_years == 0 {
        return Err(Error::Config("synthetic dataset needs at least 2 grid points and 1 year".into()));
    }
    if config.coherence_column >= d {
        return Err(Error::Config(format!("coherence column {} outside {d} points", config.coherence_column)));
    }
    let mut dates = Vec::new();
    for y in 0..config.n_years as i32 {
        let year = config.start_year + y;
        let mut day =
            NaiveDate::from_ymd_opt(year, 5, 1).ok_or_else(|| Error::Config(format!("invalid start year {year}")))?;
        while day.month() <= 8 {
            dates.push(day);
            day = day.succ_opt().expect("date in range");
        }
    }
    let n = dates.len();
    let z = ar1_fields(n, config.nx, config.ny, 0.9, crate::stats::derive_seed(seed, 1));
    let sm = ar1_fields(n, config.nx, config.ny, 0.95, crate::stats::derive_seed(seed, 2));
    let common = smooth_fields(n, config.nx, config.ny, crate::stats::derive_seed(seed, 3));
    let mut rng = stream_rng(seed, 4);

    let grid = crate::spatial::Grid::new(
        (0..d)
            .map(|i| {
                let (x, y) = ((i % config.nx) as f64, (i / config.nx) as f64);
                crate::spatial::GridPoint { id: i, x, y, lonlat: Some((-10.0 + 2.0 * x, 36.0 + 2.0 * y)) }
            })
            .collect(),
    )?;
    let mut t2m = Vec::with_capacity(n);
    let mut z500 = Vec::with_capacity(n);
    let mut soil = Vec::with_capacity(n);
    for t in 0..n {
        let season = ((dates[t].ordinal() as f64 - 120.0) / 123.0 * std::f64::consts::PI).sin();
        let years = (dates[t].year() - config.start_year) as f64;
        let c = ilogit(3.0 * z[t][config.coherence_column]);
        let (wc, wi) = (c.sqrt(), (1.0 - c).sqrt());
        t2m.push(
            (0..d)
                .map(|i| {
                    let eps = wc * common[t][i] + wi * rng.sample::<f64, _>(StandardNormal);
                    let anomaly = (0.9 * z[t][i] - 0.4 * sm[t][i] + 0.5 * eps) / 1.22f64.sqrt();
                    let tail = crate::stats::normal_cdf(-anomaly);
                    let gpd = (1.0 - tail.powf(0.3)) / 0.3;
                    18.0 + 1.0 * season + 0.03 * years + 2.5 * gpd
                })
                .collect(),
        );
        z500.push((0..d).map(|i| 5650.0 + 40.0 * season + 0.8 * years + 60.0 * z[t][i]).collect());
        soil.push((0..d).map(|i| 0.30 - 0.05 * season - 0.001 * years + 0.04 * sm[t][i]).collect());
    }
    let vars = [("t2m".to_string(), t2m), ("z500".to_string(), z500), ("sm".to_string(), soil)].into_iter().collect();
    crate::io::GriddedDataset::new(grid, dates, vars)
}
