use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;

use super::config::FlatConfig;
use super::dataset::GriddedDataset;
use super::preprocess::PreprocessOp;
use crate::boosting::TrainConfig;
use crate::error::{Error, Result};
use crate::evaluation::StudyConfig;
use crate::losses::PrecisionMethod;
use crate::pipeline::{FitConfig, ThresholdConfig};
use crate::synth::ExtentDriver;

/// Inclusive date range written `A..B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.start && d <= self.end
    }
}

impl FromStr for DateRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once("..").ok_or_else(|| Error::Config(format!("expected A..B, got {s:?}")))?;
        let parse = |x: &str| {
            NaiveDate::parse_from_str(x.trim(), "%Y-%m-%d")
                .map_err(|_| Error::Config(format!("bad date {x:?} in {s:?}")))
        };
        let (start, end) = (parse(a)?, parse(b)?);
        if start > end {
            return Err(Error::Config(format!("date range {s:?} is reversed")));
        }
        Ok(Self { start, end })
    }
}

/// Parsed run configuration. Relative paths are resolved against the
/// directory of the configuration file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Raw dataset directory in the saved-dataset layout.
    pub raw_dir: PathBuf,
    pub processed_dir: PathBuf,
    pub output_dir: PathBuf,
    pub preprocess: Vec<PreprocessOp>,
    pub train: DateRange,
    pub test: Option<DateRange>,
    pub fit: FitConfig,
    pub study: StudyConfig,
    pub study_seed: u64,
}

fn get_train(cfg: &FlatConfig, prefix: &str, base: TrainConfig) -> Result<TrainConfig> {
    let key = |k: &str| format!("boost.{prefix}.{k}");
    Ok(TrainConfig {
        n_trees: cfg.get_or(&key("n_trees"), base.n_trees)?,
        max_depth: cfg.get_or(&key("max_depth"), base.max_depth)?,
        learning_rate: cfg.get_or(&key("learning_rate"), base.learning_rate)?,
        lambda: cfg.get_or(&key("lambda"), base.lambda)?,
        gamma_complexity: cfg.get_or(&key("gamma"), base.gamma_complexity)?,
        min_child_hessian: cfg.get_or(&key("min_child_hessian"), base.min_child_hessian)?,
        hessian_floor: base.hessian_floor,
        seed: base.seed,
    })
}

/// A float or the word `prefit`.
fn get_fixed_or_prefit(cfg: &FlatConfig, key: &str, default: f64) -> Result<Option<f64>> {
    match cfg.get_str(key) {
        None => Ok(Some(default)),
        Some("prefit") => Ok(None),
        Some(_) => cfg.get::<f64>(key),
    }
}

impl RunConfig {
    pub fn from_flat(cfg: &FlatConfig, base_dir: &Path) -> Result<Self> {
        let path = |key: &str, default: &str| -> Result<PathBuf> {
            let p = PathBuf::from(cfg.get_str(key).unwrap_or(default));
            Ok(if p.is_absolute() { p } else { base_dir.join(p) })
        };
        let raw_dir = path("data.raw", "raw")?;
        let processed_dir = path("data.processed", "processed")?;
        let output_dir = path("output.dir", "out")?;

        let defaults = FitConfig::default();
        let response = cfg.get_or("variables.response", defaults.response.clone())?;
        let z500 = cfg.get_or("variables.z500", defaults.z500.clone())?;
        let sm = cfg.get_or("variables.sm", defaults.sm.clone())?;

        let reference: Option<DateRange> = cfg.get("preprocess.reference")?;
        let window = cfg.get_or("preprocess.window", 31usize)?;
        let inclusive = cfg.get_or("preprocess.rolling_inclusive", false)?;
        let mut ops = Vec::new();
        for v in cfg.get_list::<String>("preprocess.detrend")?.unwrap_or_default() {
            ops.push(PreprocessOp::Detrend { variable: v });
        }
        for v in cfg.get_list::<String>("preprocess.anomalies")?.unwrap_or_default() {
            let r = reference.ok_or_else(|| Error::Config("preprocess.anomalies needs preprocess.reference".into()))?;
            ops.push(PreprocessOp::Anomalies { variable: v, reference_start: r.start, reference_end: r.end, window });
        }
        let mut rolled = Vec::new();
        for v in [&z500, &sm] {
            if let Some(width) = cfg.get::<usize>(&format!("preprocess.rolling.{v}"))? {
                ops.push(PreprocessOp::RollingMean { variable: v.clone(), width, inclusive });
                rolled.push(v.clone());
            }
        }
        if let Some(months) = cfg.get_list::<u32>("preprocess.months")? {
            if months.iter().any(|m| !(1..=12).contains(m)) {
                return Err(Error::Config(format!("preprocess.months must lie in 1..=12, got {months:?}")));
            }
            ops.push(PreprocessOp::MonthFilter { months });
        }
        if !rolled.is_empty() {
            ops.push(PreprocessOp::DropIncomplete { variables: rolled });
        }

        let k = cfg.get_or("model.vecchia_k", 20usize)?;
        let fit = FitConfig {
            response,
            z500,
            sm,
            target_region: cfg
                .get_list("model.target_region")?
                .ok_or_else(|| Error::Config("missing required key model.target_region".into()))?,
            thresholds: ThresholdConfig {
                risk_level: cfg.get_or("model.risk_level", defaults.thresholds.risk_level)?,
                decluster_gap: cfg.get_or("model.decluster_gap", 0usize)?,
            },
            xi: cfg.get_or("model.xi", defaults.xi)?,
            alpha: get_fixed_or_prefit(cfg, "model.alpha", 1.27)?,
            theta_scale: get_fixed_or_prefit(cfg, "model.theta_scale", -0.07)?,
            prefit_alpha_grid: cfg.get_list("model.prefit_alpha_grid")?.unwrap_or(defaults.prefit_alpha_grid),
            prefit_scale_grid: cfg.get_list("model.prefit_scale_grid")?.unwrap_or(defaults.prefit_scale_grid),
            method: if k == 0 { PrecisionMethod::Dense } else { PrecisionMethod::Vecchia { k } },
            scale_convention: defaults.scale_convention,
            occurrence: get_train(cfg, "occ", defaults.occurrence)?,
            intensity: get_train(cfg, "int", defaults.intensity)?,
            dependence: get_train(cfg, "dep", defaults.dependence)?,
            cv_folds: cfg.get_or("cv.folds", defaults.cv_folds)?,
            seed: cfg.get_or("seed", 0u64)?,
        };

        let sd = StudyConfig::default();
        let pairs = match cfg.get_list::<String>("study.pairs")? {
            None => sd.pairs.clone(),
            Some(items) => items
                .iter()
                .map(|s| {
                    let (a, b) = s
                        .split_once('-')
                        .ok_or_else(|| Error::Config(format!("study.pairs items look like 0-3, got {s:?}")))?;
                    let p = |x: &str| x.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad pair {s:?}")));
                    Ok((p(a)?, p(b)?))
                })
                .collect::<Result<_>>()?,
        };
        let study = StudyConfig {
            n_reps: cfg.get_or("study.n_reps", sd.n_reps)?,
            n_days: cfg.get_or("study.n_days", sd.n_days)?,
            grid_nx: cfg.get_or("study.grid_nx", sd.grid_nx)?,
            grid_ny: cfg.get_or("study.grid_ny", sd.grid_ny)?,
            pred_nx: cfg.get_or("study.pred_nx", sd.pred_nx)?,
            pred_ny: cfg.get_or("study.pred_ny", sd.pred_ny)?,
            alpha: cfg.get_or("study.alpha", sd.alpha)?,
            driver: ExtentDriver {
                col_a: cfg.get_or("study.driver_col_a", sd.driver.col_a)?,
                col_b: cfg.get_or("study.driver_col_b", sd.driver.col_b)?,
                lo: cfg.get_or("study.driver_lo", sd.driver.lo)?,
                hi: cfg.get_or("study.driver_hi", sd.driver.hi)?,
            },
            pairs,
            early_iteration: cfg.get_or("study.early_iteration", sd.early_iteration)?,
            late_iteration: cfg.get_or("study.late_iteration", sd.late_iteration)?,
            train: get_train(cfg, "study", sd.train)?,
            method: sd.method,
        };

        let run = Self {
            raw_dir,
            processed_dir,
            output_dir,
            preprocess: ops,
            train: cfg.get("split.train")?.unwrap_or(DateRange { start: NaiveDate::MIN, end: NaiveDate::MAX }),
            test: cfg.get("split.test")?,
            fit,
            study,
            study_seed: cfg.get_or("study.seed", 0u64)?,
        };
        cfg.reject_unknown()?;
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg = FlatConfig::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_flat(&cfg, &base)
    }

    /// Days of `ds` in the training range, checked to be nonempty.
    pub fn train_days(&self, ds: &GriddedDataset) -> Result<Vec<usize>> {
        let days = ds.days_where(|d| self.train.contains(d));
        if days.is_empty() {
            return Err(Error::Config(format!(
                "training range {}..{} contains no days of the dataset",
                self.train.start, self.train.end
            )));
        }
        Ok(days)
    }
}
