//! Per-region development speed and imbalance growth.

use std::collections::BTreeMap;

use super::{ModelKind, RegressionFit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRow {
    pub region_id: u32,
    /// Linear coefficient of the LaRDI fit.
    pub slope: f64,
    /// 1 is the fastest.
    pub slope_rank: usize,
    /// Mean yearly change of the fitted STD curve over the span.
    pub std_mean_growth: f64,
    pub std_rank: usize,
}

/// Descending ranks, ties broken by region id.
fn ranks(values: &[(u32, f64)]) -> BTreeMap<u32, usize> {
    let mut order: Vec<&(u32, f64)> = values.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.iter().enumerate().map(|(i, (id, _))| (*id, i + 1)).collect()
}

/// Slopes of the linear `slope_fits` and mean growth of the `std_fits`
/// curves between `x_first` and `x_last`, with their rankings.
pub fn growth_summary(
    regions: &[u32],
    slope_fits: &BTreeMap<u32, RegressionFit>,
    std_fits: &BTreeMap<u32, RegressionFit>,
    x_first: f64,
    x_last: f64,
) -> Result<Vec<GrowthRow>> {
    if !(x_last > x_first) {
        return Err(Error::Invalid(format!("empty growth span [{x_first}, {x_last}]")));
    }
    let mut slopes = Vec::with_capacity(regions.len());
    let mut growth = Vec::with_capacity(regions.len());
    for &id in regions {
        let lin = slope_fits.get(&id).ok_or(Error::MissingRegion(id))?;
        if lin.kind != ModelKind::Linear {
            return Err(Error::Invalid(format!("slope of region {id} needs a linear fit, got {}", lin.kind)));
        }
        let std = std_fits.get(&id).ok_or(Error::MissingRegion(id))?;
        slopes.push((id, lin.params[0]));
        growth.push((id, (std.predict(x_last) - std.predict(x_first)) / (x_last - x_first)));
    }
    let (sr, gr) = (ranks(&slopes), ranks(&growth));
    Ok(slopes
        .iter()
        .zip(&growth)
        .map(|(&(id, slope), &(_, g))| GrowthRow {
            region_id: id,
            slope,
            slope_rank: sr[&id],
            std_mean_growth: g,
            std_rank: gr[&id],
        })
        .collect())
}
