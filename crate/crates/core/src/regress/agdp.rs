//! GDP per pixel by region.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GdpRow {
    pub province: String,
    pub year: i32,
    pub gdp: f64,
}

/// `agdp = gdp_total / pixel_total` for one region-year.
#[derive(Debug, Clone, PartialEq)]
pub struct AgdpRecord {
    pub region_id: u32,
    pub year: i32,
    pub agdp: f64,
    pub gdp_total: f64,
    pub pixel_total: u64,
}

/// Sums member-province GDP per region and year and divides by the region's
/// pixel count. Sums accumulate in input row order; output is sorted by
/// region then year.
pub fn aggregate_agdp(
    rows: &[GdpRow],
    province_to_region: &BTreeMap<String, u32>,
    region_pixel_counts: &BTreeMap<u32, u64>,
) -> Result<Vec<AgdpRecord>> {
    let mut totals: BTreeMap<(u32, i32), f64> = BTreeMap::new();
    for row in rows {
        let region = *province_to_region
            .get(&row.province)
            .ok_or_else(|| Error::UnmappedProvince(row.province.clone()))?;
        *totals.entry((region, row.year)).or_insert(0.0) += row.gdp;
    }
    totals
        .into_iter()
        .map(|((region_id, year), gdp_total)| {
            let pixel_total = *region_pixel_counts.get(&region_id).ok_or(Error::MissingRegion(region_id))?;
            if pixel_total == 0 {
                return Err(Error::Invalid(format!("region {region_id} has no pixels")));
            }
            Ok(AgdpRecord {
                region_id,
                year,
                agdp: gdp_total / pixel_total as f64,
                gdp_total,
                pixel_total,
            })
        })
        .collect()
}
