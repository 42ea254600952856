use serde::{Deserialize, Serialize};

use crate::boosting::FeatureMatrix;
use crate::error::{Error, Result};
use crate::io::GriddedDataset;
use crate::spatial::Grid;

/// Split the grid's bounding box into a 2x2 grid of equal-area rectangles.
/// Order: south-west, south-east, north-west, north-east. A point on a
/// midline goes to the east or north rectangle.
pub fn rectangle_partition(grid: &Grid) -> [Vec<usize>; 4] {
    let (x0, y0, x1, y1) = grid.bounding_box();
    let (mx, my) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let mut rects: [Vec<usize>; 4] = Default::default();
    for (i, p) in grid.points().iter().enumerate() {
        let east = usize::from(p.x >= mx);
        let north = usize::from(p.y >= my);
        rects[2 * north + east].push(i);
    }
    rects
}

/// Names and aggregation regions of the three predictor sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSchema {
    pub n_points: usize,
    pub z500_variable: String,
    pub sm_variable: String,
    pub target_region: Vec<usize>,
    pub rectangles: Vec<Vec<usize>>,
    /// Latitude and longitude of each point (grid `y`/`x` if not supplied).
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
}

/// Predictor fields of one day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayInputs {
    pub z500: Vec<f64>,
    pub sm: Vec<f64>,
}

fn mean_over(values: &[f64], ids: &[usize]) -> f64 {
    ids.iter().map(|&i| values[i]).sum::<f64>() / ids.len() as f64
}

impl PredictorSchema {
    pub fn new(grid: &Grid, target_region: &[usize], z500_variable: &str, sm_variable: &str) -> Result<Self> {
        let d = grid.len();
        if target_region.is_empty() {
            return Err(Error::Config("target region is empty".into()));
        }
        if let Some(i) = target_region.iter().find(|&&i| i >= d) {
            return Err(Error::Config(format!("target region id {i} outside grid of size {d}")));
        }
        let (lon, lat) = grid.points().iter().map(|p| p.lonlat.unwrap_or((p.x, p.y))).unzip();
        Ok(Self {
            n_points: d,
            z500_variable: z500_variable.into(),
            sm_variable: sm_variable.into(),
            target_region: target_region.to_vec(),
            rectangles: rectangle_partition(grid).into(),
            lat,
            lon,
        })
    }

    fn z500_names(&self) -> impl Iterator<Item = String> + '_ {
        (0..self.n_points).map(|i| format!("z500_{i}"))
    }

    pub fn occurrence_names(&self) -> Vec<String> {
        self.z500_names().chain(["sm_target".to_string()]).collect()
    }

    pub fn intensity_names(&self) -> Vec<String> {
        self.z500_names().chain(["sm_local", "lat", "lon"].map(String::from)).collect()
    }

    pub fn dependence_names(&self) -> Vec<String> {
        self.z500_names().chain(["sm_rect_sw", "sm_rect_se", "sm_rect_nw", "sm_rect_ne"].map(String::from)).collect()
    }

    pub fn check(&self, inputs: &DayInputs) -> Result<()> {
        for (name, v) in [("z500", &inputs.z500), ("sm", &inputs.sm)] {
            if v.len() != self.n_points {
                return Err(Error::Data(format!(
                    "{name} field has {} points, schema expects {}",
                    v.len(),
                    self.n_points
                )));
            }
        }
        Ok(())
    }

    /// Full Z500 field and the target-region SM mean.
    pub fn occurrence_row(&self, inputs: &DayInputs) -> Vec<f64> {
        let mut row = inputs.z500.clone();
        row.push(mean_over(&inputs.sm, &self.target_region));
        row
    }

    /// Full Z500 field, SM at the point and the point's coordinates.
    pub fn intensity_row(&self, inputs: &DayInputs, point: usize) -> Vec<f64> {
        let mut row = inputs.z500.clone();
        row.extend([inputs.sm[point], self.lat[point], self.lon[point]]);
        row
    }

    /// Full Z500 field and the SM mean of each rectangle; an empty rectangle
    /// takes the mean over the whole grid.
    pub fn dependence_row(&self, inputs: &DayInputs) -> Vec<f64> {
        let all: Vec<usize> = (0..self.n_points).collect();
        let mut row = inputs.z500.clone();
        for r in &self.rectangles {
            row.push(mean_over(&inputs.sm, if r.is_empty() { &all } else { r }));
        }
        row
    }

    /// Predictor fields of day `t`, with non-finite values reported.
    pub fn day_inputs(&self, ds: &GriddedDataset, t: usize) -> Result<DayInputs> {
        let get = |name: &str| -> Result<Vec<f64>> {
            let field = ds.variable(name)?.get(t).ok_or_else(|| Error::Data(format!("day index {t} out of range")))?;
            if let Some(i) = field.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("{name} is missing at grid point {i} on {}", ds.dates[t])));
            }
            Ok(field.clone())
        };
        let inputs = DayInputs { z500: get(&self.z500_variable)?, sm: get(&self.sm_variable)? };
        self.check(&inputs)?;
        Ok(inputs)
    }
}

/// Predictor matrices for a set of days.
#[derive(Debug, Clone)]
pub struct AssembledPredictors {
    pub days: Vec<usize>,
    pub occurrence: FeatureMatrix,
    pub dependence: FeatureMatrix,
    inputs: Vec<DayInputs>,
}

impl AssembledPredictors {
    pub fn inputs(&self, i: usize) -> &DayInputs {
        &self.inputs[i]
    }

    /// Intensity rows for `(position in days, point)` pairs.
    pub fn intensity(&self, schema: &PredictorSchema, cells: &[(usize, usize)]) -> Result<FeatureMatrix> {
        let rows: Vec<Vec<f64>> = cells.iter().map(|&(i, d)| schema.intensity_row(&self.inputs[i], d)).collect();
        FeatureMatrix::from_rows(schema.intensity_names(), &rows)
    }
}

pub fn assemble_predictors(
    ds: &GriddedDataset,
    schema: &PredictorSchema,
    days: &[usize],
) -> Result<AssembledPredictors> {
    if ds.grid.len() != schema.n_points {
        return Err(Error::Data(format!(
            "dataset grid has {} points, schema expects {}",
            ds.grid.len(),
            schema.n_points
        )));
    }
    let inputs: Vec<DayInputs> = days.iter().map(|&t| schema.day_inputs(ds, t)).collect::<Result<_>>()?;
    let occ: Vec<Vec<f64>> = inputs.iter().map(|x| schema.occurrence_row(x)).collect();
    let dep: Vec<Vec<f64>> = inputs.iter().map(|x| schema.dependence_row(x)).collect();
    Ok(AssembledPredictors {
        days: days.to_vec(),
        occurrence: FeatureMatrix::from_rows(schema.occurrence_names(), &occ)?,
        dependence: FeatureMatrix::from_rows(schema.dependence_names(), &dep)?,
        inputs,
    })
}
