//! Region-masked statistics per year and the per-region / per-year table
//! layout.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{csv_error, Error, Result};
use crate::numfmt::sig6;
use crate::raster::{Grid, LabelMask};

pub const ZONAL_HEADER: [&str; 11] = [
    "region_id",
    "region_name",
    "year",
    "count",
    "area_km2",
    "min",
    "max",
    "range",
    "mean",
    "std",
    "sum",
];

/// Statistics of one region in one year. `sum` is the region's total night
/// light; `mean` is `sum / count`; `std` is the population deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalRecord {
    pub region_id: u32,
    pub region_name: String,
    pub year: i32,
    pub count: u64,
    pub area_km2: f64,
    pub dn_min: f64,
    pub dn_max: f64,
    pub dn_range: f64,
    pub mean: f64,
    pub std: f64,
    pub sum: f64,
}

impl ZonalRecord {
    /// The record as read back from a CSV written at printed precision.
    pub fn quantized(&self) -> ZonalRecord {
        use crate::numfmt::printed;
        ZonalRecord {
            area_km2: printed(self.area_km2),
            dn_min: printed(self.dn_min),
            dn_max: printed(self.dn_max),
            dn_range: printed(self.dn_range),
            mean: printed(self.mean),
            std: printed(self.std),
            sum: printed(self.sum),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ZonalOptions {
    /// Restrict statistics to lit pixels (DN > 0).
    pub lit_only: bool,
}

#[derive(Clone, Copy)]
struct Acc {
    count: u64,
    sum: f64,
    min: f64,
    max: f64,
    sq_dev: f64,
}

/// Per-label statistics of `grid` under `mask`, over valid pixels only.
///
/// Labels without a single valid pixel are skipped with a warning. The
/// deviation pass runs after the means are known, so `std` is computed from
/// centred values.
pub fn zonal_stats(
    grid: &Grid,
    mask: &LabelMask,
    year: i32,
    options: ZonalOptions,
) -> Result<Vec<ZonalRecord>> {
    mask.ensure_applies_to(grid.header())?;
    let ids = mask.region_ids();
    if ids.is_empty() {
        return Err(Error::Invalid("mask has no labelled regions".into()));
    }
    let slot: HashMap<u32, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut acc = vec![
        Acc {
            count: 0,
            sum: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            sq_dev: 0.0,
        };
        ids.len()
    ];

    let included = |i: usize| -> Option<(usize, f64)> {
        let label = mask.labels()[i];
        if label == 0 {
            return None;
        }
        let v = grid.valid(i)?;
        if options.lit_only && v <= 0.0 {
            return None;
        }
        Some((slot[&label], v))
    };

    for i in 0..grid.values().len() {
        if let Some((k, v)) = included(i) {
            let a = &mut acc[k];
            a.count += 1;
            a.sum += v;
            a.min = a.min.min(v);
            a.max = a.max.max(v);
        }
    }
    let means: Vec<f64> = acc
        .iter()
        .map(|a| if a.count > 0 { a.sum / a.count as f64 } else { 0.0 })
        .collect();
    for i in 0..grid.values().len() {
        if let Some((k, v)) = included(i) {
            let d = v - means[k];
            acc[k].sq_dev += d * d;
        }
    }

    let cell_km2 = grid.header().cellsize * grid.header().cellsize / 1e6;
    let mut out = Vec::with_capacity(ids.len());
    for (k, &id) in ids.iter().enumerate() {
        let a = acc[k];
        if a.count == 0 {
            warn!("zonal: region {id} has no valid pixels in {year}; omitted");
            continue;
        }
        out.push(ZonalRecord {
            region_id: id,
            region_name: mask.name(id).unwrap_or_default().to_string(),
            year,
            count: a.count,
            area_km2: a.count as f64 * cell_km2,
            dn_min: a.min,
            dn_max: a.max,
            dn_range: a.max - a.min,
            // Rounding in the sum can push the quotient past the extremes.
            mean: means[k].clamp(a.min, a.max),
            std: (a.sq_dev / a.count as f64).sqrt(),
            sum: a.sum,
        });
    }
    Ok(out)
}

fn record_fields(r: &ZonalRecord) -> [String; 11] {
    [
        r.region_id.to_string(),
        r.region_name.clone(),
        r.year.to_string(),
        r.count.to_string(),
        sig6(r.area_km2),
        sig6(r.dn_min),
        sig6(r.dn_max),
        sig6(r.dn_range),
        sig6(r.mean),
        sig6(r.std),
        sig6(r.sum),
    ]
}

fn write_rows(path: &Path, rows: &[[String; 11]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(ZONAL_HEADER).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_zonal_csv(records: &[ZonalRecord], path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<_> = records.iter().map(record_fields).collect();
    write_rows(path.as_ref(), &rows)
}

/// Reads a zonal CSV. Empty placeholder rows (missing region-year cells)
/// are skipped.
pub fn read_zonal_csv(path: impl AsRef<Path>) -> Result<Vec<ZonalRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ZONAL_HEADER {
        return Err(Error::parse(path, 1, format!("expected header {}", ZONAL_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec[3].trim().is_empty() {
            continue;
        }
        let bad = |k: usize| Error::parse(path, line, format!("bad {} {:?}", ZONAL_HEADER[k], &rec[k]));
        let real = |k: usize| rec[k].trim().parse::<f64>().map_err(|_| bad(k));
        out.push(ZonalRecord {
            region_id: rec[0].trim().parse().map_err(|_| bad(0))?,
            region_name: rec[1].to_string(),
            year: rec[2].trim().parse().map_err(|_| bad(2))?,
            count: rec[3].trim().parse().map_err(|_| bad(3))?,
            area_km2: real(4)?,
            dn_min: real(5)?,
            dn_max: real(6)?,
            dn_range: real(7)?,
            mean: real(8)?,
            std: real(9)?,
            sum: real(10)?,
        });
    }
    Ok(out)
}

/// Regions and years the exported tables must cover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableLayout {
    pub regions: Vec<(u32, String)>,
    pub years: Vec<i32>,
}

impl TableLayout {
    /// Every region and year that occurs in `records`.
    pub fn from_records(records: &[ZonalRecord]) -> TableLayout {
        let regions: BTreeMap<u32, String> = records
            .iter()
            .map(|r| (r.region_id, r.region_name.clone()))
            .collect();
        let mut years: Vec<i32> = records.iter().map(|r| r.year).collect();
        years.sort_unstable();
        years.dedup();
        TableLayout {
            regions: regions.into_iter().collect(),
            years,
        }
    }
}

pub fn region_table_name(region_id: u32) -> String {
    format!("region_{region_id:02}.csv")
}

pub fn year_table_name(year: i32) -> String {
    format!("year_{year}.csv")
}

/// Writes one CSV per region (rows = years) and one per year (rows =
/// regions). A region-year cell without a record becomes a row with only the
/// key columns filled. Returns the written paths, regions first.
pub fn export_tables(
    records: &[ZonalRecord],
    layout: &TableLayout,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let index: HashMap<(u32, i32), &ZonalRecord> =
        records.iter().map(|r| ((r.region_id, r.year), r)).collect();
    let row = |id: u32, name: &str, year: i32| -> [String; 11] {
        match index.get(&(id, year)) {
            Some(r) => record_fields(r),
            None => {
                warn!("zonal tables: no record for region {id} in {year}; writing an empty row");
                let mut empty: [String; 11] = Default::default();
                empty[0] = id.to_string();
                empty[1] = name.to_string();
                empty[2] = year.to_string();
                empty
            }
        }
    };

    let mut written = Vec::with_capacity(layout.regions.len() + layout.years.len());
    for (id, name) in &layout.regions {
        let rows: Vec<_> = layout.years.iter().map(|&y| row(*id, name, y)).collect();
        let path = out_dir.join(region_table_name(*id));
        write_rows(&path, &rows)?;
        written.push(path);
    }
    for &year in &layout.years {
        let rows: Vec<_> = layout.regions.iter().map(|(id, name)| row(*id, name, year)).collect();
        let path = out_dir.join(year_table_name(year));
        write_rows(&path, &rows)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Header;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn header(nc: usize, nr: usize) -> Header {
        Header::new(nc, nr, 0.0, 0.0, 1000.0, -9999.0)
    }

    fn mask(h: Header, labels: Vec<u32>) -> LabelMask {
        LabelMask::new(
            h,
            labels.clone(),
            labels.iter().filter(|&&l| l != 0).map(|&l| (l, format!("r{l}"))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn four_value_hand_computation() {
        let h = header(2, 2);
        let g = Grid::new(h, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let r = &zonal_stats(&g, &mask(h, vec![1; 4]), 2000, ZonalOptions::default()).unwrap()[0];
        assert_eq!(r.count, 4);
        assert_eq!(r.sum, 6.0);
        assert_eq!(r.mean, 1.5);
        assert_eq!((r.dn_min, r.dn_max, r.dn_range), (0.0, 3.0, 3.0));
        assert!((r.std - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.area_km2, 4.0);
    }

    #[test]
    fn constant_grid_has_zero_spread() {
        let h = header(3, 3);
        let g = Grid::filled(h, 5.0).unwrap();
        let r = &zonal_stats(&g, &mask(h, vec![2; 9]), 2000, ZonalOptions::default()).unwrap()[0];
        assert_eq!((r.mean, r.std), (5.0, 0.0));
    }

    #[test]
    fn nodata_is_excluded_and_empty_labels_omitted() {
        let h = header(4, 1);
        let g = Grid::new(h, vec![-9999.0, 4.0, -9999.0, 0.0]).unwrap();
        let recs = zonal_stats(&g, &mask(h, vec![1, 2, 3, 2]), 2000, ZonalOptions::default()).unwrap();
        assert_eq!(recs.iter().map(|r| r.region_id).collect::<Vec<_>>(), [2]);
        assert_eq!(recs[0].count, 2);
        let lit = zonal_stats(&g, &mask(h, vec![1, 2, 3, 2]), 2000, ZonalOptions { lit_only: true }).unwrap();
        assert_eq!((lit[0].count, lit[0].mean), (1, 4.0));
    }

    #[test]
    fn misaligned_mask_is_rejected() {
        let g = Grid::filled(header(2, 2), 1.0).unwrap();
        assert!(zonal_stats(&g, &mask(header(4, 1), vec![1; 4]), 2000, ZonalOptions::default()).is_err());
    }

    /// Per-label loop over pixels in row-major order.
    fn oracle(grid: &Grid, labels: &[u32], id: u32) -> (u64, f64, f64, f64, f64, f64) {
        let vals: Vec<f64> = (0..labels.len())
            .filter(|&i| labels[i] == id && grid.values()[i] != -9999.0)
            .map(|i| grid.values()[i])
            .collect();
        let n = vals.len() as f64;
        let mut sum = 0.0;
        for v in &vals {
            sum += v;
        }
        let mean = sum / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (vals.len() as u64, sum, min, max, mean, var.sqrt())
    }

    #[test]
    fn random_grids_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = header(64, 64);
        for _ in 0..5 {
            let vals: Vec<f64> = (0..4096)
                .map(|_| if rng.gen_bool(0.05) { -9999.0 } else { rng.gen_range(0.0..63.0) })
                .collect();
            let labels: Vec<u32> = (0..4096).map(|_| rng.gen_range(0..=8)).collect();
            let g = Grid::new(h, vals).unwrap();
            for r in zonal_stats(&g, &mask(h, labels.clone()), 2001, ZonalOptions::default()).unwrap() {
                let (count, sum, min, max, mean, std) = oracle(&g, &labels, r.region_id);
                assert_eq!((r.count, r.sum, r.dn_min, r.dn_max), (count, sum, min, max));
                assert_eq!(r.dn_range, max - min);
                assert!(((r.mean - mean) / mean).abs() <= 1e-12);
                assert!(((r.std - std) / std).abs() <= 1e-12);
                assert!((r.sum - r.mean * r.count as f64).abs() <= 1e-9 * r.sum.abs());
            }
        }
    }

    #[test]
    fn splitting_a_region_conserves_sum_and_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = header(32, 32);
        let vals: Vec<f64> = (0..1024).map(|_| rng.gen_range(0..64) as f64).collect();
        let g = Grid::new(h, vals).unwrap();
        let parent = zonal_stats(&g, &mask(h, vec![1; 1024]), 2000, ZonalOptions::default()).unwrap();
        let split: Vec<u32> = (0..1024).map(|_| rng.gen_range(1..=2)).collect();
        let kids = zonal_stats(&g, &mask(h, split), 2000, ZonalOptions::default()).unwrap();
        assert_eq!(parent[0].count, kids.iter().map(|k| k.count).sum::<u64>());
        assert_eq!(parent[0].sum, kids.iter().map(|k| k.sum).sum::<f64>());
    }

    #[test]
    fn traversal_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = header(16, 16);
        let vals: Vec<f64> = (0..256).map(|_| rng.gen_range(0..64) as f64).collect();
        let labels: Vec<u32> = (0..256).map(|_| rng.gen_range(1..=3)).collect();
        let mut perm: Vec<usize> = (0..256).collect();
        for i in (1..256).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let a = zonal_stats(&Grid::new(h, vals.clone()).unwrap(), &mask(h, labels.clone()), 2000, ZonalOptions::default()).unwrap();
        let pv: Vec<f64> = perm.iter().map(|&i| vals[i]).collect();
        let pl: Vec<u32> = perm.iter().map(|&i| labels[i]).collect();
        let b = zonal_stats(&Grid::new(h, pv).unwrap(), &mask(h, pl), 2000, ZonalOptions::default()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.count, x.sum, x.dn_min, x.dn_max), (y.count, y.sum, y.dn_min, y.dn_max));
            assert!((x.std - y.std).abs() <= 1e-12 * x.std);
        }
    }

    fn record(id: u32, year: i32) -> ZonalRecord {
        ZonalRecord {
            region_id: id,
            region_name: format!("Region, {id}"),
            year,
            count: 10,
            area_km2: 10.0,
            dn_min: 0.0,
            dn_max: 9.0,
            dn_range: 9.0,
            mean: id as f64 + year as f64 / 10_000.0,
            std: 1.5,
            sum: 45.0,
        }
    }

    fn rows(path: &Path) -> Vec<Vec<String>> {
        let mut r = csv::Reader::from_path(path).unwrap();
        r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
    }

    #[test]
    fn exports_one_file_per_region_and_year() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<_> = (1..=8).flat_map(|id| (1992..=2013).map(move |y| record(id, y))).collect();
        let layout = TableLayout::from_records(&records);
        let files = export_tables(&records, &layout, dir.path()).unwrap();
        assert_eq!(files.len(), 30);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 30);

        let mut by_region: Vec<Vec<String>> = files[..8].iter().flat_map(|p| rows(p)).collect();
        let mut by_year: Vec<Vec<String>> = files[8..].iter().flat_map(|p| rows(p)).collect();
        by_region.sort();
        by_year.sort();
        assert_eq!(by_region, by_year);
        assert_eq!(by_region.len(), 8 * 22);
    }

    #[test]
    fn single_cell_layout_gives_two_files() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![record(3, 2000)];
        let files = export_tables(&records, &TableLayout::from_records(&records), dir.path()).unwrap();
        assert_eq!(files.len(), 2);
    }

    #[test]
    fn missing_cells_become_empty_rows() {
        let dir = tempfile::tempdir().unwrap();
        let layout = TableLayout { regions: vec![(1, "a".into()), (2, "b".into())], years: vec![2000, 2001] };
        let files = export_tables(&[record(1, 2000)], &layout, dir.path()).unwrap();
        let r2 = rows(&files[1]);
        assert_eq!(r2.len(), 2);
        assert_eq!(r2[0][..3], ["2", "b", "2000"]);
        assert!(r2[0][3..].iter().all(String::is_empty));
        assert_eq!(read_zonal_csv(&files[1]).unwrap().len(), 0);
    }

    #[test]
    fn zonal_csv_round_trips_at_printed_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.csv");
        let recs = vec![record(1, 2000), record(2, 2001)];
        write_zonal_csv(&recs, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("region_id,region_name,year,count,area_km2,min,max,range,mean,std,sum\n"));
        let back = read_zonal_csv(&path).unwrap();
        let want: Vec<_> = recs.iter().map(ZonalRecord::quantized).collect();
        assert_eq!(back, want);
    }
}
