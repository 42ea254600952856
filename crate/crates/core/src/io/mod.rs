//! Datasets, preprocessing, configuration and artifact files.

mod config;
mod dataset;
mod preprocess;
mod run_config;

use std::io::Write;
use std::path::Path;

pub use config::FlatConfig;
pub use dataset::{
    grid_csv, load_dataset, load_saved_dataset, read_grid_csv, read_variable_csv, save_dataset, variable_csv,
    GriddedDataset,
};
pub use preprocess::{day_key, detrend, replay, rolling_mean, standardized_anomalies, Climatology, PreprocessOp};

pub use run_config::{DateRange, RunConfig};

use crate::error::{Error, Result};

/// Write via a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
