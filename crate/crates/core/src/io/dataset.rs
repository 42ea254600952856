use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::preprocess::PreprocessOp;
use super::write_atomic;
use crate::error::{Error, Result};
use crate::spatial::{Grid, GridPoint};

/// Named `(day, grid point)` arrays on a shared grid and day index.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedDataset {
    pub grid: Grid,
    pub dates: Vec<NaiveDate>,
    /// `variables[name][day][point]`.
    pub variables: BTreeMap<String, Vec<Vec<f64>>>,
    /// Preprocessing applied so far, in order.
    pub provenance: Vec<PreprocessOp>,
}

impl GriddedDataset {
    pub fn new(grid: Grid, dates: Vec<NaiveDate>, variables: BTreeMap<String, Vec<Vec<f64>>>) -> Result<Self> {
        let ds = Self { grid, dates, variables, provenance: Vec::new() };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Data(format!("day index not strictly increasing at {} -> {}", w[0], w[1])));
        }
        let d = self.grid.len();
        for (name, days) in &self.variables {
            if days.len() != self.dates.len() {
                return Err(Error::Data(format!(
                    "variable {name} has {} days, index has {}",
                    days.len(),
                    self.dates.len()
                )));
            }
            if let Some(t) = days.iter().position(|f| f.len() != d) {
                return Err(Error::Data(format!(
                    "variable {name} on {} does not cover the {d}-point grid",
                    self.dates[t]
                )));
            }
        }
        Ok(())
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn variable(&self, name: &str) -> Result<&[Vec<f64>]> {
        self.variables
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Data(format!("dataset has no variable {name:?}")))
    }

    pub fn variable_mut(&mut self, name: &str) -> Result<&mut Vec<Vec<f64>>> {
        self.variables.get_mut(name).ok_or_else(|| Error::Data(format!("dataset has no variable {name:?}")))
    }

    pub fn day_index(&self, date: NaiveDate) -> Result<usize> {
        self.dates.binary_search(&date).map_err(|_| Error::Data(format!("day {date} is not in the dataset")))
    }

    /// Dataset restricted to the listed days (kept in index order).
    pub fn select_days(&self, days: &[usize]) -> Self {
        Self {
            grid: self.grid.clone(),
            dates: days.iter().map(|&t| self.dates[t]).collect(),
            variables: self
                .variables
                .iter()
                .map(|(k, v)| (k.clone(), days.iter().map(|&t| v[t].clone()).collect()))
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Indices of days whose date satisfies `keep`.
    pub fn days_where(&self, keep: impl Fn(NaiveDate) -> bool) -> Vec<usize> {
        (0..self.dates.len()).filter(|&t| keep(self.dates[t])).collect()
    }
}

fn parse_f64(s: &str, what: &str, line: u64) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Data(format!("line {line}: cannot parse {what} {s:?}")))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Grid CSV with header `id,x,y` and optional `lon,lat` columns.
pub fn read_grid_csv(path: &Path) -> Result<Grid> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(ci), Some(cx), Some(cy)) = (col("id"), col("x"), col("y")) else {
        return Err(Error::Data(format!("{}: grid header must contain id,x,y", path.display())));
    };
    let lonlat = col("lon").zip(col("lat"));
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[ci]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Data(format!("line {line}: bad grid id {:?}", &rec[ci])))?;
        let ll = match lonlat {
            Some((a, b)) => Some((parse_f64(&rec[a], "lon", line)?, parse_f64(&rec[b], "lat", line)?)),
            None => None,
        };
        points.push(GridPoint {
            id,
            x: parse_f64(&rec[cx], "x", line)?,
            y: parse_f64(&rec[cy], "y", line)?,
            lonlat: ll,
        });
    }
    Grid::new(points).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn grid_csv(grid: &Grid) -> String {
    let with_ll = grid.points().iter().any(|p| p.lonlat.is_some());
    let mut s = String::from(if with_ll { "id,x,y,lon,lat\n" } else { "id,x,y\n" });
    for p in grid.points() {
        s.push_str(&format!("{},{},{}", p.id, p.x, p.y));
        if with_ll {
            let (lon, lat) = p.lonlat.unwrap_or((f64::NAN, f64::NAN));
            s.push_str(&format!(",{lon},{lat}"));
        }
        s.push('\n');
    }
    s
}

/// Variable CSV `date,id,value` on a grid of `d` points. Returns the sorted
/// dates and the `[day][point]` array. Duplicate and missing cells are errors.
pub fn read_variable_csv(path: &Path, d: usize) -> Result<(Vec<NaiveDate>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["date", "id", "value"] {
        return Err(Error::Data(format!("{}: header must be date,id,value", path.display())));
    }
    let mut cells: HashMap<NaiveDate, Vec<Option<f64>>> = HashMap::new();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec).map_err(|e| csv_err(path, e))? {
        let line = rec.position().map_or(0, |p| p.line());
        let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d")
            .map_err(|_| Error::Data(format!("{} line {line}: bad date {:?}", path.display(), &rec[0])))?;
        let id = rec[1]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Data(format!("{} line {line}: bad id {:?}", path.display(), &rec[1])))?;
        if id >= d {
            return Err(Error::Data(format!("{} line {line}: id {id} outside grid of {d} points", path.display())));
        }
        let value = parse_f64(&rec[2], "value", line)?;
        let row = cells.entry(date).or_insert_with(|| vec![None; d]);
        if row[id].replace(value).is_some() {
            return Err(Error::Data(format!("{} line {line}: duplicate cell ({date}, {id})", path.display())));
        }
    }
    let mut dates: Vec<NaiveDate> = cells.keys().copied().collect();
    dates.sort();
    let mut values = Vec::with_capacity(dates.len());
    for date in &dates {
        let row = &cells[date];
        let mut out = Vec::with_capacity(d);
        for (id, v) in row.iter().enumerate() {
            out.push(v.ok_or_else(|| Error::Data(format!("{}: missing cell ({date}, {id})", path.display())))?);
        }
        values.push(out);
    }
    Ok((dates, values))
}

pub fn variable_csv(dates: &[NaiveDate], values: &[Vec<f64>]) -> String {
    let mut s = String::with_capacity(values.len() * values.first().map_or(0, Vec::len) * 24 + 16);
    s.push_str("date,id,value\n");
    for (date, row) in dates.iter().zip(values) {
        let ds = date.format("%Y-%m-%d").to_string();
        for (id, v) in row.iter().enumerate() {
            s.push_str(&format!("{ds},{id},{v}\n"));
        }
    }
    s
}

/// Load a grid and `(name, path)` variable files into a dataset. Every
/// variable must cover the same days.
pub fn load_dataset(grid_csv: &Path, variables: &[(String, PathBuf)]) -> Result<GriddedDataset> {
    let grid = read_grid_csv(grid_csv)?;
    let mut dates: Option<Vec<NaiveDate>> = None;
    let mut vars = BTreeMap::new();
    for (name, path) in variables {
        let (dv, values) = read_variable_csv(path, grid.len())?;
        match &dates {
            None => dates = Some(dv),
            Some(d0) if *d0 != dv => {
                let missing = d0.iter().find(|d| !dv.contains(d)).or_else(|| dv.iter().find(|d| !d0.contains(d)));
                return Err(Error::Data(format!(
                    "variable {name} covers different days than the first variable (e.g. {})",
                    missing.map_or("?".into(), |d| d.to_string())
                )));
            }
            _ => {}
        }
        if vars.insert(name.clone(), values).is_some() {
            return Err(Error::Config(format!("variable {name} listed twice")));
        }
    }
    GriddedDataset::new(grid, dates.unwrap_or_default(), vars)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    variables: Vec<String>,
    provenance: Vec<PreprocessOp>,
}

const DATASET_FORMAT: &str = "grpboost-dataset/1";

/// Write `grid.csv`, one `<name>.csv` per variable and `dataset.json`
/// (variable list and provenance) into `dir`.
pub fn save_dataset(ds: &GriddedDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("grid.csv"), grid_csv(&ds.grid).as_bytes())?;
    for (name, values) in &ds.variables {
        write_atomic(&dir.join(format!("{name}.csv")), variable_csv(&ds.dates, values).as_bytes())?;
    }
    let manifest = Manifest {
        format: DATASET_FORMAT.into(),
        variables: ds.variables.keys().cloned().collect(),
        provenance: ds.provenance.clone(),
    };
    write_atomic(&dir.join("dataset.json"), (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())
}

/// Inverse of [`save_dataset`].
pub fn load_saved_dataset(dir: &Path) -> Result<GriddedDataset> {
    let path = dir.join("dataset.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != DATASET_FORMAT {
        return Err(Error::Data(format!("{}: unknown dataset format {:?}", path.display(), manifest.format)));
    }
    let vars: Vec<(String, PathBuf)> =
        manifest.variables.iter().map(|n| (n.clone(), dir.join(format!("{n}.csv")))).collect();
    let mut ds = load_dataset(&dir.join("grid.csv"), &vars)?;
    ds.provenance = manifest.provenance;
    Ok(ds)
}
