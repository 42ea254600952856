use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::dataset::GriddedDataset;
use crate::error::{Error, Result};

/// Remove the ordinary least-squares line in the position index `0..n`.
pub fn detrend(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let nf = n as f64;
    let t_mean = (nf - 1.0) / 2.0;
    let y_mean = series.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in series.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (y - y_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    let resid: Vec<f64> = series.iter().enumerate().map(|(i, y)| (y - y_mean) - slope * (i as f64 - t_mean)).collect();
    // second pass removes the rounding left in the mean
    let r_mean = resid.iter().sum::<f64>() / nf;
    resid.into_iter().map(|r| r - r_mean).collect()
}

/// Mean of the `width` days strictly before each day (`t - width .. t - 1`),
/// or ending at `t` when `inclusive`. Days whose window is incomplete or not
/// contiguous in `dates` are NaN.
pub fn rolling_mean(dates: &[NaiveDate], series: &[f64], width: usize, inclusive: bool) -> Result<Vec<f64>> {
    if width == 0 {
        return Err(Error::Config("rolling window width must be at least 1".into()));
    }
    if dates.len() != series.len() {
        return Err(Error::Data("rolling_mean: dates and series differ in length".into()));
    }
    let shift = if inclusive { 0 } else { 1 };
    Ok((0..series.len())
        .map(|t| {
            if t + 1 < width + shift {
                return f64::NAN;
            }
            let end = t + 1 - shift;
            let start = end - width;
            if (dates[t] - dates[start]).num_days() != (t - start) as i64 {
                return f64::NAN;
            }
            series[start..end].iter().sum::<f64>() / width as f64
        })
        .collect())
}

/// Calendar key with 29 February mapped onto 28 February.
pub fn day_key(date: NaiveDate) -> (u32, u32) {
    if date.month() == 2 && date.day() == 29 {
        (2, 28)
    } else {
        (date.month(), date.day())
    }
}

/// Day-of-year mean and standard deviation, each the average over reference
/// years of the window-centred running statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct Climatology {
    pub mean: BTreeMap<(u32, u32), f64>,
    pub sd: BTreeMap<(u32, u32), f64>,
}

impl Climatology {
    pub fn fit(dates: &[NaiveDate], series: &[f64], reference: (NaiveDate, NaiveDate), window: usize) -> Result<Self> {
        if dates.len() != series.len() {
            return Err(Error::Data("climatology: dates and series differ in length".into()));
        }
        if window == 0 {
            return Err(Error::Config("climatology window must be at least 1".into()));
        }
        let half = (window / 2) as i64;
        let mut acc: BTreeMap<(u32, u32), (f64, f64, usize)> = BTreeMap::new();
        let mut lo = 0;
        for t in 0..dates.len() {
            if dates[t] < reference.0 || dates[t] > reference.1 {
                continue;
            }
            while (dates[t] - dates[lo]).num_days() > half {
                lo += 1;
            }
            let mut vals = Vec::with_capacity(window);
            let mut j = lo;
            while j < dates.len() && (dates[j] - dates[t]).num_days() <= half {
                if series[j].is_finite() {
                    vals.push(series[j]);
                }
                j += 1;
            }
            if vals.len() < 2 {
                continue;
            }
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let s = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let e = acc.entry(day_key(dates[t])).or_insert((0.0, 0.0, 0));
            e.0 += m;
            e.1 += s;
            e.2 += 1;
        }
        if acc.is_empty() {
            return Err(Error::Config(format!(
                "reference period {} .. {} contains no usable days",
                reference.0, reference.1
            )));
        }
        Ok(Self {
            mean: acc.iter().map(|(k, v)| (*k, v.0 / v.2 as f64)).collect(),
            sd: acc.iter().map(|(k, v)| (*k, v.1 / v.2 as f64)).collect(),
        })
    }

    pub fn anomalies(&self, dates: &[NaiveDate], series: &[f64]) -> Result<Vec<f64>> {
        dates
            .iter()
            .zip(series)
            .map(|(d, v)| {
                let k = day_key(*d);
                let (Some(m), Some(s)) = (self.mean.get(&k), self.sd.get(&k)) else {
                    return Err(Error::Data(format!("no climatology for day-of-year {:02}-{:02}", k.0, k.1)));
                };
                if !(*s > 0.0) {
                    return Err(Error::Numeric(format!("zero climatological SD on day-of-year {:02}-{:02}", k.0, k.1)));
                }
                Ok((v - m) / s)
            })
            .collect()
    }
}

/// Standardized anomalies against the climatology of the reference period.
pub fn standardized_anomalies(
    dates: &[NaiveDate],
    series: &[f64],
    reference: (NaiveDate, NaiveDate),
    window: usize,
) -> Result<Vec<f64>> {
    Climatology::fit(dates, series, reference, window)?.anomalies(dates, series)
}

/// A recorded preprocessing operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PreprocessOp {
    Detrend {
        variable: String,
    },
    Anomalies {
        variable: String,
        reference_start: NaiveDate,
        reference_end: NaiveDate,
        window: usize,
    },
    RollingMean {
        variable: String,
        width: usize,
        inclusive: bool,
    },
    /// Keep only days whose month is listed.
    MonthFilter {
        months: Vec<u32>,
    },
    /// Drop days on which any listed variable has a non-finite value.
    DropIncomplete {
        variables: Vec<String>,
    },
}

fn map_columns(
    ds: &mut GriddedDataset,
    variable: &str,
    f: impl Fn(&[NaiveDate], &[f64]) -> Result<Vec<f64>>,
) -> Result<()> {
    let dates = ds.dates.clone();
    let d = ds.grid.len();
    let values = ds.variable_mut(variable)?;
    for s in 0..d {
        let col: Vec<f64> = values.iter().map(|day| day[s]).collect();
        let out = f(&dates, &col).map_err(|e| Error::Data(format!("{variable}, grid point {s}: {e}")))?;
        for (day, v) in values.iter_mut().zip(out) {
            day[s] = v;
        }
    }
    Ok(())
}

impl PreprocessOp {
    /// Apply to `ds` and append to its provenance.
    pub fn apply(&self, ds: &mut GriddedDataset) -> Result<()> {
        match self {
            PreprocessOp::Detrend { variable } => map_columns(ds, variable, |_, s| Ok(detrend(s)))?,
            PreprocessOp::Anomalies { variable, reference_start, reference_end, window } => {
                map_columns(ds, variable, |d, s| {
                    standardized_anomalies(d, s, (*reference_start, *reference_end), *window)
                })?
            }
            PreprocessOp::RollingMean { variable, width, inclusive } => {
                map_columns(ds, variable, |d, s| rolling_mean(d, s, *width, *inclusive))?
            }
            PreprocessOp::MonthFilter { months } => {
                let keep = ds.days_where(|d| months.contains(&d.month()));
                let provenance = std::mem::take(&mut ds.provenance);
                *ds = ds.select_days(&keep);
                ds.provenance = provenance;
            }
            PreprocessOp::DropIncomplete { variables } => {
                for v in variables {
                    ds.variable(v)?;
                }
                let keep: Vec<usize> = (0..ds.n_days())
                    .filter(|&t| variables.iter().all(|v| ds.variables[v][t].iter().all(|x| x.is_finite())))
                    .collect();
                let provenance = std::mem::take(&mut ds.provenance);
                *ds = ds.select_days(&keep);
                ds.provenance = provenance;
            }
        }
        ds.provenance.push(self.clone());
        Ok(())
    }
}

/// Apply `ops` in order to a copy of `raw`.
pub fn replay(raw: &GriddedDataset, ops: &[PreprocessOp]) -> Result<GriddedDataset> {
    let mut ds = raw.clone();
    for op in ops {
        op.apply(&mut ds)?;
    }
    Ok(ds)
}
