use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{Satellite, SensorProduct};
use crate::error::{csv_error, Error, Result};
use crate::raster::read_ascii_grid;

/// One `year,satellite,path` row. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub year: i32,
    pub satellite: Satellite,
    pub path: PathBuf,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["year", "satellite", "path"] {
        return Err(Error::parse(path, 1, "expected header year,satellite,path"));
    }
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let year = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad year {:?}", &record[0])))?;
        let satellite = record[1]
            .parse()
            .map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        let p = PathBuf::from(record[2].trim());
        let p = if p.is_absolute() { p } else { base.join(p) };
        entries.push(ManifestEntry { year, satellite, path: p });
    }
    Ok(entries)
}

/// Reads every listed grid and groups products by year, preserving manifest
/// order within a year.
pub fn load_products(entries: &[ManifestEntry]) -> Result<BTreeMap<i32, Vec<SensorProduct>>> {
    let products = entries
        .par_iter()
        .map(|e| SensorProduct::new(e.satellite, e.year, read_ascii_grid(&e.path)?))
        .collect::<Result<Vec<_>>>()?;
    let mut by_year: BTreeMap<i32, Vec<SensorProduct>> = BTreeMap::new();
    for p in products {
        let list = by_year.entry(p.year()).or_default();
        if list.iter().any(|q| q.satellite() == p.satellite()) {
            return Err(Error::Invalid(format!("duplicate manifest entry {}", p.id())));
        }
        list.push(p);
    }
    Ok(by_year)
}
