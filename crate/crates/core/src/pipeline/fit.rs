use serde::{Deserialize, Serialize};

use super::predictors::{assemble_predictors, AssembledPredictors, DayInputs, PredictorSchema};
use super::thresholds::{select_thresholds, ThresholdConfig, ThresholdSpec};
use crate::boosting::{boost, cross_validate, CvResult, FeatureMatrix, LossAdapter, TrainConfig, TreeEnsemble};
use crate::error::{Error, Result};
use crate::io::GriddedDataset;
use crate::losses::{
    prefit_dependence, standardizing_scale, GpdLoss, GpdRow, GrpScoreLoss, LogLoss, PrecisionMethod, ScaleConvention,
    ScoreSetup,
};
use crate::spatial::Grid;
use crate::stats::{derive_seed, ilogit};

pub const BUNDLE_FORMAT: &str = "grpboost-bundle/1";

/// Settings of a full three-stage fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub response: String,
    pub z500: String,
    pub sm: String,
    pub target_region: Vec<usize>,
    pub thresholds: ThresholdConfig,
    pub xi: f64,
    /// `None` fits `alpha` and `theta_scale` by an unconditional prefit.
    pub alpha: Option<f64>,
    pub theta_scale: Option<f64>,
    pub prefit_alpha_grid: Vec<f64>,
    pub prefit_scale_grid: Vec<f64>,
    pub method: PrecisionMethod,
    pub scale_convention: ScaleConvention,
    pub occurrence: TrainConfig,
    pub intensity: TrainConfig,
    pub dependence: TrainConfig,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            response: "t2m".into(),
            z500: "z500".into(),
            sm: "sm".into(),
            target_region: vec![0],
            thresholds: ThresholdConfig::default(),
            xi: -0.3,
            alpha: Some(1.27),
            theta_scale: Some(-0.07),
            prefit_alpha_grid: vec![0.5, 0.75, 1.0, 1.25, 1.5, 1.75],
            prefit_scale_grid: vec![-0.3, -0.15, 0.0, 0.15, 0.3],
            method: PrecisionMethod::Vecchia { k: 20 },
            scale_convention: ScaleConvention::GpdScale,
            occurrence: TrainConfig { n_trees: 200, max_depth: 2, learning_rate: 0.05, ..Default::default() },
            intensity: TrainConfig { n_trees: 200, max_depth: 3, learning_rate: 0.05, ..Default::default() },
            dependence: TrainConfig { n_trees: 200, max_depth: 2, learning_rate: 0.05, ..Default::default() },
            cv_folds: 5,
            seed: 0,
        }
    }
}

/// A fitted sub-model with the training settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageModel {
    pub ensemble: TreeEnsemble,
    /// Settings used for cross-validation; `n_trees` is the search bound.
    pub train: TrainConfig,
    pub selected_trees: usize,
    pub n_rows: usize,
}

/// Everything needed to predict and simulate from the fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubModelBundle {
    pub format: String,
    pub grid: Grid,
    pub schema: PredictorSchema,
    pub thresholds: ThresholdSpec,
    pub xi: f64,
    pub alpha: f64,
    pub theta_scale: f64,
    pub method: PrecisionMethod,
    pub scale_convention: ScaleConvention,
    pub seed: u64,
    pub occurrence: StageModel,
    pub intensity: StageModel,
    pub dependence: StageModel,
}

impl SubModelBundle {
    pub fn validate(&self) -> Result<()> {
        if self.format != BUNDLE_FORMAT {
            return Err(Error::Data(format!("unknown bundle format {:?}", self.format)));
        }
        let d = self.grid.len();
        if self.schema.n_points != d || self.thresholds.b.len() != d || self.thresholds.m.len() != d {
            return Err(Error::Data(format!("bundle schema or thresholds do not match the {d}-point grid")));
        }
        for (stage, model, names) in [
            ("occurrence", &self.occurrence, self.schema.occurrence_names()),
            ("intensity", &self.intensity, self.schema.intensity_names()),
            ("dependence", &self.dependence, self.schema.dependence_names()),
        ] {
            if model.ensemble.feature_names != names {
                return Err(Error::Data(format!("{stage} ensemble features do not match the predictor schema")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: Self = serde_json::from_str(text)?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn score_setup(&self) -> ScoreSetup {
        ScoreSetup { grid: self.grid.clone(), alpha: self.alpha, theta_scale: self.theta_scale, method: self.method }
    }
}

/// Cross-validation curves of each stage, alongside the bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub occurrence: CvResult,
    pub intensity: CvResult,
    pub dependence: CvResult,
}

fn fit_stage(
    stage: &str,
    loss: &dyn LossAdapter,
    features: &FeatureMatrix,
    train: TrainConfig,
    folds: usize,
) -> Result<(StageModel, CvResult)> {
    let rows: Vec<usize> = (0..loss.n_rows()).collect();
    let wrap = |e: Error| match e {
        Error::Config(m) => Error::Config(format!("{stage} stage: {m}")),
        Error::Data(m) => Error::Data(format!("{stage} stage: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{stage} stage: {m}")),
        other => Error::Numeric(format!("{stage} stage: {other}")),
    };
    let cv = cross_validate(loss, features, &rows, &train, folds).map_err(wrap)?;
    let final_cfg = TrainConfig { n_trees: cv.selected, ..train };
    let ensemble = boost(loss, features, &rows, &final_cfg).map_err(wrap)?;
    log::info!("{stage}: {} rows, {} trees selected", rows.len(), cv.selected);
    Ok((StageModel { ensemble, train, selected_trees: cv.selected, n_rows: rows.len() }, cv))
}

/// Standardize exceedance-day fields to the Pareto scale. Points whose
/// standardized value is undefined (non-positive scale or a bracket outside
/// the support) get `z = 0` and drop out of that day's score.
pub fn standardize_day(
    y: &[f64],
    theta_int: &[f64],
    thresholds: &ThresholdSpec,
    xi: f64,
    convention: ScaleConvention,
) -> Vec<f64> {
    (0..y.len())
        .map(|d| {
            let s = standardizing_scale(theta_int[d], thresholds.m[d], xi, convention);
            let bracket = 1.0 + xi * (y[d] - thresholds.b[d]) / s;
            if s > 0.0 && bracket > 0.0 {
                bracket.powf(1.0 / xi)
            } else {
                0.0
            }
        })
        .collect()
}

fn intensity_field(model: &TreeEnsemble, schema: &PredictorSchema, inputs: &DayInputs) -> Vec<f64> {
    (0..schema.n_points).map(|d| model.predict_unchecked(&schema.intensity_row(inputs, d))).collect()
}

/// Fit occurrence, intensity and dependence in sequence on every day of `ds`.
pub fn fit_all(ds: &GriddedDataset, config: &FitConfig) -> Result<(SubModelBundle, FitReport)> {
    if config.xi == 0.0 || !config.xi.is_finite() {
        return Err(Error::Config(format!("xi must be finite and nonzero, got {}", config.xi)));
    }
    let response = ds.variable(&config.response)?;
    let thresholds = select_thresholds(response, &config.target_region, &config.thresholds)?;
    let schema = PredictorSchema::new(&ds.grid, &config.target_region, &config.z500, &config.sm)?;
    let all_days: Vec<usize> = (0..ds.n_days()).collect();
    let preds: AssembledPredictors = assemble_predictors(ds, &schema, &all_days)?;
    let seeded = |c: TrainConfig, label: u64| TrainConfig { seed: derive_seed(config.seed, label), ..c };

    let mut labels = vec![0.0; ds.n_days()];
    for &t in &thresholds.exceedance_days {
        labels[t] = 1.0;
    }
    let (occurrence, occ_cv) = fit_stage(
        "occurrence",
        &LogLoss::new(labels)?,
        &preds.occurrence,
        seeded(config.occurrence, 1),
        config.cv_folds,
    )?;

    let mut cells = Vec::new();
    let mut rows = Vec::new();
    for &t in &thresholds.exceedance_days {
        for d in 0..ds.grid.len() {
            if response[t][d] > thresholds.b[d] {
                cells.push((t, d));
                rows.push(GpdRow { y: response[t][d], b: thresholds.b[d], m: thresholds.m[d], group: t });
            }
        }
    }
    let int_features = preds.intensity(&schema, &cells)?;
    let (intensity, int_cv) = fit_stage(
        "intensity",
        &GpdLoss { rows, xi: config.xi },
        &int_features,
        seeded(config.intensity, 2),
        config.cv_folds,
    )?;

    let z_days: Vec<Vec<f64>> = thresholds
        .exceedance_days
        .iter()
        .map(|&t| {
            let theta = intensity_field(&intensity.ensemble, &schema, preds.inputs(t));
            standardize_day(&response[t], &theta, &thresholds, config.xi, config.scale_convention)
        })
        .collect();
    let dropped: usize = z_days.iter().map(|z| z.iter().filter(|v| **v == 0.0).count()).sum();
    if dropped > 0 {
        log::warn!("{dropped} exceedance-day values fall outside the fitted marginal support and are dropped");
    }
    let (alpha, theta_scale) = match (config.alpha, config.theta_scale) {
        (Some(a), Some(s)) => (a, s),
        (a, s) => {
            let alphas = a.map_or(config.prefit_alpha_grid.clone(), |v| vec![v]);
            let scales = s.map_or(config.prefit_scale_grid.clone(), |v| vec![v]);
            let pre = prefit_dependence(&z_days, &ds.grid, config.method, &alphas, &scales)?;
            log::info!("dependence prefit: alpha {}, theta_scale {}", pre.alpha, pre.theta_scale);
            (pre.alpha, pre.theta_scale)
        }
    };
    let setup = ScoreSetup { grid: ds.grid.clone(), alpha, theta_scale, method: config.method };
    let dep_rows: Vec<Vec<f64>> =
        thresholds.exceedance_days.iter().map(|&t| schema.dependence_row(preds.inputs(t))).collect();
    let dep_features = FeatureMatrix::from_rows(schema.dependence_names(), &dep_rows)?;
    let (dependence, dep_cv) = fit_stage(
        "dependence",
        &GrpScoreLoss::new(&z_days, &setup)?,
        &dep_features,
        seeded(config.dependence, 3),
        config.cv_folds,
    )?;

    let bundle = SubModelBundle {
        format: BUNDLE_FORMAT.into(),
        grid: ds.grid.clone(),
        schema,
        thresholds,
        xi: config.xi,
        alpha,
        theta_scale,
        method: config.method,
        scale_convention: config.scale_convention,
        seed: config.seed,
        occurrence,
        intensity,
        dependence,
    };
    bundle.validate()?;
    Ok((bundle, FitReport { occurrence: occ_cv, intensity: int_cv, dependence: dep_cv }))
}

/// Sub-model outputs for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPrediction {
    pub p_occ: f64,
    pub theta_int: Vec<f64>,
    pub theta_extent: f64,
}

pub fn predict_day(bundle: &SubModelBundle, inputs: &DayInputs) -> Result<DayPrediction> {
    bundle.schema.check(inputs)?;
    let s = &bundle.schema;
    Ok(DayPrediction {
        p_occ: ilogit(bundle.occurrence.ensemble.predict(&s.occurrence_row(inputs))?),
        theta_int: intensity_field(&bundle.intensity.ensemble, s, inputs),
        theta_extent: bundle.dependence.ensemble.predict(&s.dependence_row(inputs))?,
    })
}
