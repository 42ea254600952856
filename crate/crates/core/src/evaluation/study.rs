//! Parameter-recovery study for the dependence sub-model.
//!
//! Predictor fields are drawn once and held fixed. Each replicate simulates
//! one standard Pareto field per day with `theta_extent` given by an
//! [`ExtentDriver`], fits the dependence ensemble on all predictor columns,
//! and records `pi_t(s1, s2) = pairwise_limit_prob(gamma_t(s1, s2))` at an
//! early and a late boosting iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{boost, FeatureMatrix, TrainConfig};
use crate::brown_resnick::{simulate_grp, GrpSpec};
use crate::error::{Error, Result};
use crate::losses::{GrpScoreLoss, PrecisionMethod, ScoreSetup};
use crate::risk::RiskFunctional;
use crate::spatial::{pairwise_limit_prob, semivariogram, Grid, SemivariogramParams};
use crate::stats::{derive_seed, quantile_type7};
use crate::synth::{smooth_fields, ExtentDriver};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_reps: usize,
    pub n_days: usize,
    /// Response grid, `grid_nx * grid_ny` points with unit spacing.
    pub grid_nx: usize,
    pub grid_ny: usize,
    /// Predictor lattice, `pred_nx * pred_ny` columns.
    pub pred_nx: usize,
    pub pred_ny: usize,
    pub alpha: f64,
    pub driver: ExtentDriver,
    pub pairs: Vec<(usize, usize)>,
    pub early_iteration: usize,
    pub late_iteration: usize,
    pub train: TrainConfig,
    pub method: PrecisionMethod,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_reps: 100,
            n_days: 272,
            grid_nx: 10,
            grid_ny: 5,
            pred_nx: 22,
            pred_ny: 11,
            alpha: 1.0,
            driver: ExtentDriver::default(),
            pairs: vec![(0, 3), (12, 34)],
            early_iteration: 5,
            late_iteration: 190,
            train: TrainConfig { n_trees: 190, max_depth: 2, learning_rate: 0.05, ..TrainConfig::default() },
            method: PrecisionMethod::Dense,
        }
    }
}

impl StudyConfig {
    fn validate(&self) -> Result<()> {
        if self.n_reps == 0 || self.n_days < 2 {
            return Err(Error::Config("study needs at least one replicate and two days".into()));
        }
        let d = self.grid_nx * self.grid_ny;
        if let Some(p) = self.pairs.iter().find(|(a, b)| *a >= d || *b >= d || a == b) {
            return Err(Error::Config(format!("study pair {p:?} invalid for {d} grid points")));
        }
        if self.early_iteration > self.late_iteration || self.late_iteration > self.train.n_trees {
            return Err(Error::Config("study iterations must satisfy early <= late <= n_trees".into()));
        }
        self.driver.validate(self.pred_nx * self.pred_ny)?;
        self.train.validate()
    }
}

/// Summary of one (day, pair) across replicates at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub sd: f64,
}

impl BoxStats {
    fn of(values: &[f64]) -> Self {
        let m = values.iter().sum::<f64>() / values.len() as f64;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            q25: quantile_type7(values, 0.25),
            median: quantile_type7(values, 0.5),
            q75: quantile_type7(values, 0.75),
            sd,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        truth >= self.q25 && truth <= self.q75
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub day: usize,
    pub pair: (usize, usize),
    pub truth: f64,
    pub early: BoxStats,
    pub late: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub cells: Vec<StudyCell>,
    /// Fraction of cells whose truth lies inside the replicate IQR.
    pub coverage_early: f64,
    pub coverage_late: f64,
    /// Median over cells of `|median - truth|`.
    pub median_abs_bias_early: f64,
    pub median_abs_bias_late: f64,
    /// Mean replicate SD at the late iteration by quartile of the truth.
    pub late_sd_by_truth_quartile: [f64; 4],
    /// Unconditional initial estimate of `theta_extent`, per replicate.
    pub initial_estimates: Vec<f64>,
}

fn pair_prob(grid: &Grid, alpha: f64, theta: f64, (s1, s2): (usize, usize)) -> Result<f64> {
    let params = SemivariogramParams::new(alpha, theta, 0.0)?;
    pairwise_limit_prob(semivariogram(grid.point(s1), grid.point(s2), &params))
}

/// Run the study. Replicates use seeds derived from `seed` and run in
/// parallel; the report does not depend on the thread count.
pub fn simulation_study(config: &StudyConfig, seed: u64) -> Result<StudyReport> {
    config.validate()?;
    let grid = Grid::regular(config.grid_nx, config.grid_ny, 1.0);
    let d = grid.len();
    let predictors = smooth_fields(config.n_days, config.pred_nx, config.pred_ny, derive_seed(seed, 1));
    let features = FeatureMatrix::from_rows(
        (0..config.pred_nx * config.pred_ny).map(|c| format!("z500_{c}")).collect(),
        &predictors,
    )?;
    let truth_theta: Vec<f64> = predictors.iter().map(|x| config.driver.theta(x)).collect();
    let setup = ScoreSetup { grid: grid.clone(), alpha: config.alpha, theta_scale: 0.0, method: config.method };
    let rows: Vec<usize> = (0..config.n_days).collect();

    // replicate -> (initial estimate, [early, late] theta per day)
    let reps = (0..config.n_reps)
        .into_par_iter()
        .map(|rep| -> Result<(f64, Vec<f64>, Vec<f64>)> {
            let rep_seed = derive_seed(seed, 1000 + rep as u64);
            let z_days = (0..config.n_days)
                .map(|t| {
                    let spec = GrpSpec {
                        grid: grid.clone(),
                        params: SemivariogramParams::new(config.alpha, truth_theta[t], 0.0)?,
                        scale: vec![1.0; d],
                        b: vec![1.0; d],
                        xi: 1.0,
                        risk: RiskFunctional::uniform(d),
                        u: 1.0,
                    };
                    Ok(simulate_grp(&spec, 1, derive_seed(rep_seed, t as u64))?.fields.remove(0))
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let loss = GrpScoreLoss::new(&z_days, &setup)?;
            let ens = boost(&loss, &features, &rows, &config.train)?;
            let early = rows
                .iter()
                .map(|&t| ens.predict_staged(features.row(t), config.early_iteration))
                .collect::<Result<_>>()?;
            let late = rows
                .iter()
                .map(|&t| ens.predict_staged(features.row(t), config.late_iteration))
                .collect::<Result<_>>()?;
            Ok((ens.base_score, early, late))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::with_capacity(config.n_days * config.pairs.len());
    for t in 0..config.n_days {
        for &pair in &config.pairs {
            let truth = pair_prob(&grid, config.alpha, truth_theta[t], pair)?;
            let early: Vec<f64> =
                reps.iter().map(|r| pair_prob(&grid, config.alpha, r.1[t], pair)).collect::<Result<_>>()?;
            let late: Vec<f64> =
                reps.iter().map(|r| pair_prob(&grid, config.alpha, r.2[t], pair)).collect::<Result<_>>()?;
            cells.push(StudyCell { day: t, pair, truth, early: BoxStats::of(&early), late: BoxStats::of(&late) });
        }
    }
    let n = cells.len() as f64;
    let coverage = |f: fn(&StudyCell) -> &BoxStats| cells.iter().filter(|c| f(c).covers(c.truth)).count() as f64 / n;
    let bias = |f: fn(&StudyCell) -> &BoxStats| {
        let b: Vec<f64> = cells.iter().map(|c| (f(c).median - c.truth).abs()).collect();
        quantile_type7(&b, 0.5)
    };
    let truths: Vec<f64> = cells.iter().map(|c| c.truth).collect();
    let cuts = [quantile_type7(&truths, 0.25), quantile_type7(&truths, 0.5), quantile_type7(&truths, 0.75)];
    let mut sd_sum = [0.0; 4];
    let mut sd_n = [0usize; 4];
    for c in &cells {
        let q = cuts.iter().filter(|&&cut| c.truth > cut).count();
        sd_sum[q] += c.late.sd;
        sd_n[q] += 1;
    }
    let late_sd_by_truth_quartile =
        std::array::from_fn(|q| if sd_n[q] == 0 { f64::NAN } else { sd_sum[q] / sd_n[q] as f64 });
    Ok(StudyReport {
        coverage_early: coverage(|c| &c.early),
        coverage_late: coverage(|c| &c.late),
        median_abs_bias_early: bias(|c| &c.early),
        median_abs_bias_late: bias(|c| &c.late),
        late_sd_by_truth_quartile,
        initial_estimates: reps.iter().map(|r| r.0).collect(),
        cells,
    })
}
