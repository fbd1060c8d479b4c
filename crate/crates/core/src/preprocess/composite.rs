use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{resolve_calibration_chain, CalibrationGraph, SensorProduct};
use crate::error::{Error, Result};
use crate::raster::Grid;

/// DMSP/OLS stable-lights DN ceiling.
pub const SATURATION_CEILING: f64 = 63.0;

/// What went into a composite: product IDs and the calibration chain
/// applied to each, in manifest order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub products: Vec<String>,
    pub chains: Vec<String>,
}

/// One calibrated, averaged and corrected grid per year.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnualComposite {
    pub year: i32,
    pub grid: Grid,
    pub provenance: Provenance,
}

/// Per-cell mean over the grids that hold a valid value there; nodata only
/// where every input is nodata.
pub fn mean_of(grids: &[&Grid]) -> Result<Grid> {
    let first = grids
        .first()
        .ok_or_else(|| Error::Invalid("nothing to average".into()))?;
    for g in &grids[1..] {
        first.header().ensure_aligned(g.header())?;
    }
    if grids.len() == 1 {
        return Ok((*first).clone());
    }
    let nodata = first.nodata();
    let values = (0..first.values().len())
        .map(|i| {
            let mut sum = 0.0;
            let mut n = 0usize;
            for g in grids {
                if let Some(v) = g.valid(i) {
                    sum += v;
                    n += 1;
                }
            }
            if n == 0 {
                nodata
            } else {
                sum / n as f64
            }
        })
        .collect();
    let out = Grid::new(*first.header(), values)?;
    Ok(match first.crs() {
        Some(crs) => out.with_crs(crs),
        None => out,
    })
}

/// Mean of two same-year products. Where one side is nodata the other's
/// value is kept.
pub fn average_duplicates(a: &Grid, b: &Grid) -> Result<Grid> {
    mean_of(&[a, b])
}

/// Forward running maximum per pixel so that no year is darker than any
/// earlier year. Nodata cells stay nodata and do not reset the maximum.
pub fn enforce_continuity(series: &[AnnualComposite]) -> Result<Vec<AnnualComposite>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    for pair in series.windows(2) {
        if pair[1].year <= pair[0].year {
            return Err(Error::Invalid(format!(
                "series not strictly ordered by year: {} then {}",
                pair[0].year, pair[1].year
            )));
        }
        first.grid.header().ensure_aligned(pair[1].grid.header())?;
    }
    let mut running = vec![f64::NEG_INFINITY; first.grid.values().len()];
    series
        .iter()
        .map(|c| {
            let grid = &c.grid;
            let values = grid
                .values()
                .iter()
                .zip(running.iter_mut())
                .map(|(&v, m)| {
                    if grid.is_nodata(v) {
                        v
                    } else {
                        *m = m.max(v);
                        *m
                    }
                })
                .collect();
            let mut out = Grid::new(*grid.header(), values)?;
            if let Some(crs) = grid.crs() {
                out = out.with_crs(crs);
            }
            Ok(AnnualComposite {
                year: c.year,
                grid: out,
                provenance: c.provenance.clone(),
            })
        })
        .collect()
}

pub fn clip_saturation(grid: &Grid, ceiling: f64) -> Result<Grid> {
    grid.map_valid(|v| v.min(ceiling))
}

/// Calibrate, average, enforce continuity, clip, in that order. Years must
/// run without gaps from the first to the last manifest year.
pub fn build_annual_composites(
    manifest: &BTreeMap<i32, Vec<SensorProduct>>,
    graph: &CalibrationGraph,
    ceiling: f64,
) -> Result<Vec<AnnualComposite>> {
    let (Some(&first), Some(&last)) = (manifest.keys().next(), manifest.keys().next_back()) else {
        return Err(Error::Invalid("empty manifest".into()));
    };
    for year in first..=last {
        if manifest.get(&year).is_none_or(Vec::is_empty) {
            return Err(Error::GapYear(year));
        }
    }

    let years: Vec<(&i32, &Vec<SensorProduct>)> = manifest.iter().collect();
    let averaged = years
        .par_iter()
        .map(|(&year, products)| {
            let mut provenance = Provenance::default();
            let mut calibrated = Vec::with_capacity(products.len());
            for p in products.iter() {
                let chain = resolve_calibration_chain(graph, p.satellite())?;
                calibrated.push(chain.apply(p.grid())?);
                provenance.products.push(p.id());
                provenance.chains.push(chain.describe());
            }
            let refs: Vec<&Grid> = calibrated.iter().collect();
            Ok(AnnualComposite {
                year,
                grid: mean_of(&refs)?,
                provenance,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    enforce_continuity(&averaged)?
        .into_par_iter()
        .map(|c| {
            Ok(AnnualComposite {
                grid: clip_saturation(&c.grid, ceiling)?,
                ..c
            })
        })
        .collect()
}
