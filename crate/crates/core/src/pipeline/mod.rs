//! The three-stage model: threshold selection, predictor assembly,
//! sequential fitting of occurrence, intensity and dependence, prediction
//! and scenario generation.

mod fit;
mod predictors;
mod scenarios;
mod thresholds;

pub use fit::{
    fit_all, predict_day, standardize_day, DayPrediction, FitConfig, FitReport, StageModel, SubModelBundle,
    BUNDLE_FORMAT,
};
pub use predictors::{assemble_predictors, rectangle_partition, AssembledPredictors, DayInputs, PredictorSchema};
pub use scenarios::{day_spec, event_probability, generate_scenarios, qq_for_point, Scenarios};
pub use thresholds::{
    compute_risk_series, dataset_risk_series, select_thresholds, ThresholdConfig, ThresholdSpec, MIN_THRESHOLD_DAYS,
};
