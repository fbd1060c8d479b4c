//! Processing stages and their file writers, shared by the subcommands and
//! the pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;

use nightlights::numfmt::printed;
use nightlights::preprocess::{
    fit_intercalibration, load_products, pseudo_invariant_samples, read_manifest, select_calibration_years,
    AnnualComposite, CalibrationModel, Satellite, SensorProduct,
};
use nightlights::raster::{read_ascii_grid, render_ascii_grid, Grid, LabelMask};
use nightlights::regress::{
    aggregate_agdp, growth_summary, AgdpRecord, FitRow, FourierOptions, GdpRow, GrowthRow, ModelKind,
    RegressionFit, SeriesSpec, SeriesTable,
};
use nightlights::urban::{
    threshold_urban, track_clusters, urban_summary, write_timeline, write_urban_summary, ClusterTimeline,
    Connectivity, UrbanSummaryRow,
};
use nightlights::zonal::{export_tables, write_zonal_csv, zonal_stats, TableLayout, ZonalOptions, ZonalRecord};

pub type Products = BTreeMap<i32, Vec<SensorProduct>>;

pub fn load_manifest(path: &Path) -> Result<Products> {
    let entries = read_manifest(path)?;
    Ok(load_products(&entries)?)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Fits each `source -> target` edge over the pseudo-invariant `site`, using
/// the closest pair of product years.
pub fn fit_edges(products: &Products, site: &LabelMask, edges: &[(Satellite, Satellite)]) -> Result<Vec<CalibrationModel>> {
    let all: Vec<&SensorProduct> = products.values().flatten().collect();
    let find = |sat: Satellite, year: i32| -> Result<&SensorProduct> {
        all.iter()
            .copied()
            .find(|p| p.satellite() == sat && p.year() == year)
            .ok_or_else(|| anyhow!("no {sat} product for {year}"))
    };
    edges
        .iter()
        .map(|&(source, target)| {
            let (ys, yt) = select_calibration_years(all.iter().copied(), source, target)
                .ok_or_else(|| anyhow!("no products to fit {source}->{target}"))?;
            let (reference, raw) = pseudo_invariant_samples(find(target, yt)?.grid(), find(source, ys)?.grid(), site)?;
            let model = fit_intercalibration(source, target, &reference, &raw)?;
            info!("fitted {source} {ys} -> {target} {yt} on {} site cells, r2 {}", raw.len(), model.r2);
            Ok(model)
        })
        .collect()
}

pub fn composite_file_name(year: i32) -> String {
    format!("composite_{year}.asc")
}

/// Writes `composite_YYYY.asc` per year and `provenance.csv`.
pub fn write_composites(composites: &[AnnualComposite], dir: &Path) -> Result<()> {
    create_dir(dir)?;
    composites.par_iter().try_for_each(|c| write_text(&dir.join(composite_file_name(c.year)), &render_ascii_grid(&c.grid)))?;
    let mut prov = String::from("year,products,chains\n");
    for c in composites {
        prov.push_str(&format!("{},{},{}\n", c.year, c.provenance.products.join(";"), c.provenance.chains.join(";")));
    }
    write_text(&dir.join("provenance.csv"), &prov)
}

/// Last run of four digits in the file stem, e.g. `composite_2004.asc`.
pub fn year_from_name(path: &Path) -> Option<i32> {
    let stem = path.file_stem()?.to_str()?;
    let bytes = stem.as_bytes();
    let mut end = bytes.len();
    while end > 0 {
        if bytes[end - 1].is_ascii_digit() {
            let mut start = end;
            while start > 0 && bytes[start - 1].is_ascii_digit() {
                start -= 1;
            }
            if end - start == 4 {
                return stem[start..end].parse().ok();
            }
            end = start;
        } else {
            end -= 1;
        }
    }
    None
}

/// Expands directories to their `composite_*.asc` files.
pub fn expand_grid_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension().is_some_and(|e| e == "asc")
                        && f.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("composite_"))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Reads grids with their years, taken from the file names. `year` applies
/// only to a single grid, which falls back to year 0 when its name has none.
pub fn read_year_grids(paths: &[PathBuf], year: Option<i32>) -> Result<Vec<(i32, Grid)>> {
    let paths = expand_grid_paths(paths)?;
    if paths.is_empty() {
        bail!("no grids given");
    }
    let single = paths.len() == 1;
    if year.is_some() && !single {
        bail!("--year applies to a single grid");
    }
    let mut grids: Vec<(i32, Grid)> = paths
        .par_iter()
        .map(|p| {
            let y = match (year, year_from_name(p)) {
                (Some(y), _) | (None, Some(y)) => y,
                (None, None) if single => {
                    warn!("no year in {}; recording year 0 (pass --year to set it)", p.display());
                    0
                }
                (None, None) => bail!("cannot tell the year of {}; name grids like composite_YYYY.asc", p.display()),
            };
            Ok((y, read_ascii_grid(p)?))
        })
        .collect::<Result<_>>()?;
    grids.sort_by_key(|g| g.0);
    if let Some(w) = grids.windows(2).find(|w| w[0].0 == w[1].0) {
        bail!("two grids for {}", w[0].0);
    }
    Ok(grids)
}

/// Zonal records of every year, years ascending, quantized to the precision
/// of the zonal CSV.
pub fn zonal_all(grids: &[(i32, Grid)], mask: &LabelMask, options: ZonalOptions) -> Result<Vec<ZonalRecord>> {
    let per_year: Vec<Vec<ZonalRecord>> = grids
        .par_iter()
        .map(|(year, g)| zonal_stats(g, mask, *year, options))
        .collect::<nightlights::Result<_>>()?;
    Ok(per_year.into_iter().flatten().map(|r| r.quantized()).collect())
}

type Field = fn(&ZonalRecord) -> f64;

/// Series derived from the zonal records: LaRDI, STD and TNL.
pub const SERIES: [(&str, Field); 3] = [("lardi", |r| r.mean), ("std", |r| r.std), ("tnl", |r| r.sum)];

pub fn series_of(records: &[ZonalRecord], value: Field) -> SeriesTable {
    let mut table = SeriesTable::new();
    for r in records {
        table.entry(r.region_id).or_default().push((r.year, value(r)));
    }
    table
}

/// `zonal.csv` plus, optionally, the per-region / per-year tables and the
/// LaRDI, STD and TNL series.
pub fn write_zonal_outputs(
    records: &[ZonalRecord],
    mask: &LabelMask,
    years: &[i32],
    zonal_csv: &Path,
    tables_dir: Option<&Path>,
    series_dir: Option<&Path>,
) -> Result<()> {
    if let Some(parent) = zonal_csv.parent() {
        create_dir(parent)?;
    }
    write_zonal_csv(records, zonal_csv)?;
    if let Some(dir) = tables_dir {
        let layout = TableLayout {
            regions: mask.legend().iter().map(|(k, v)| (*k, v.clone())).collect(),
            years: years.to_vec(),
        };
        export_tables(records, &layout, dir)?;
    }
    if let Some(dir) = series_dir {
        create_dir(dir)?;
        for (name, value) in SERIES {
            nightlights::regress::write_series_csv(&series_of(records, value), dir.join(format!("{name}.csv")))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct FitSettings {
    pub x_offset: i32,
    pub x_scale: f64,
    pub start_year: Option<i32>,
    pub end_year: Option<i32>,
    pub fourier_grid: usize,
}

impl FitSettings {
    pub fn spec(&self, points: &[(i32, f64)]) -> Result<SeriesSpec> {
        let kept: Vec<(i32, f64)> = points
            .iter()
            .copied()
            .filter(|p| self.start_year.is_none_or(|s| p.0 >= s) && self.end_year.is_none_or(|e| p.0 <= e))
            .collect();
        Ok(SeriesSpec::new(self.x_offset, self.x_scale, kept)?)
    }
}

fn fit_one(kind: ModelKind, spec: &SeriesSpec, settings: &FitSettings) -> nightlights::Result<RegressionFit> {
    match kind {
        ModelKind::Fourier1 => nightlights::regress::fit_fourier1_with(
            spec,
            &FourierOptions { grid_size: settings.fourier_grid, ..FourierOptions::default() },
        ),
        k => k.fit(spec),
    }
}

/// Every model on every region's series. A model that cannot be fitted to a
/// region is skipped with a warning.
pub fn fit_table(table: &SeriesTable, models: &[ModelKind], settings: &FitSettings) -> Result<Vec<FitRow>> {
    let regions: Vec<(&u32, &Vec<(i32, f64)>)> = table.iter().collect();
    let rows: Vec<Vec<FitRow>> = regions
        .par_iter()
        .map(|(id, points)| {
            let spec = settings.spec(points).with_context(|| format!("series of region {id}"))?;
            Ok(models
                .iter()
                .filter_map(|&kind| match fit_one(kind, &spec, settings) {
                    Ok(fit) => Some(FitRow { region_id: **id, fit }),
                    Err(e) => {
                        warn!("region {id}: {kind} fit skipped: {e}");
                        None
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Fit of `model` per region, or the first listed fit when `model` is None.
pub fn pick_fits(rows: &[FitRow], model: Option<ModelKind>) -> BTreeMap<u32, RegressionFit> {
    let mut out = BTreeMap::new();
    for r in rows {
        if model.is_none_or(|m| r.fit.kind == m) {
            out.entry(r.region_id).or_insert_with(|| r.fit.clone());
        }
    }
    out
}

/// Linear slopes and the mean growth of the STD fits over
/// `[first_year, last_year]`.
pub fn growth(
    slope_fits: &[FitRow],
    std_fits: &[FitRow],
    x_offset: i32,
    first_year: i32,
    last_year: i32,
) -> Result<Vec<GrowthRow>> {
    let slopes = pick_fits(slope_fits, Some(ModelKind::Linear));
    let stds = pick_fits(std_fits, None);
    let regions: Vec<u32> = slopes.keys().copied().collect();
    let x = |y: i32| (y - x_offset) as f64;
    Ok(growth_summary(&regions, &slopes, &stds, x(first_year), x(last_year))?)
}

/// AGDP per region-year, with pixel totals from the mask.
pub fn agdp(rows: &[GdpRow], provinces: &BTreeMap<String, u32>, mask: &LabelMask) -> Result<Vec<AgdpRecord>> {
    let counts: BTreeMap<u32, u64> = mask.region_ids().into_iter().map(|id| (id, mask.pixel_count(id) as u64)).collect();
    Ok(aggregate_agdp(rows, provinces, &counts)?)
}

/// AGDP as a series at printed precision.
pub fn agdp_series(records: &[AgdpRecord]) -> SeriesTable {
    let mut table = SeriesTable::new();
    for r in records {
        table.entry(r.region_id).or_default().push((r.year, printed(r.agdp)));
    }
    table
}

pub struct UrbanOutputs {
    pub summary: Vec<UrbanSummaryRow>,
    pub timelines: Vec<(Option<u32>, ClusterTimeline)>,
}

/// Threshold extraction and cluster tracking per region. Each region is
/// processed on its bounding window.
pub fn urban_all(grids: &[(i32, Grid)], mask: &LabelMask, threshold: f64, connectivity: Connectivity) -> Result<UrbanOutputs> {
    let regions = mask.region_ids();
    let per_region: Vec<Option<(Vec<UrbanSummaryRow>, ClusterTimeline)>> = regions
        .par_iter()
        .map(|&id| {
            let Some((window, sub)) = mask.crop_to_region(id)? else {
                warn!("urban: region {id} has no cells");
                return Ok(None);
            };
            let mut extracts = Vec::with_capacity(grids.len());
            for (year, g) in grids {
                let crop = g.crop(&window)?;
                extracts.extend(threshold_urban(&crop, threshold, Some(&sub), *year)?);
            }
            let timeline = track_clusters(&extracts, connectivity)?;
            Ok(Some((urban_summary(&extracts, &timeline), timeline)))
        })
        .collect::<Result<_>>()?;
    let mut summary = Vec::new();
    let mut timelines = Vec::new();
    for (id, item) in regions.iter().zip(per_region) {
        if let Some((rows, t)) = item {
            summary.extend(rows);
            timelines.push((Some(*id), t));
        }
    }
    Ok(UrbanOutputs { summary, timelines })
}

/// Binary urban raster over all mask regions.
pub fn urban_binary(grid: &Grid, mask: &LabelMask, threshold: f64, year: i32) -> Result<Grid> {
    mask.ensure_applies_to(grid.header())?;
    let all = threshold_urban(grid, threshold, None, year)?.remove(0);
    let values = all
        .binary
        .values()
        .iter()
        .zip(mask.labels())
        .map(|(&v, &l)| if l == 0 { 0.0 } else { v })
        .collect();
    Ok(Grid::new(*all.binary.header(), values)?)
}

pub fn write_urban_outputs(
    outputs: &UrbanOutputs,
    grids: &[(i32, Grid)],
    mask: &LabelMask,
    threshold: f64,
    binary_years: &[i32],
    dir: &Path,
) -> Result<()> {
    create_dir(dir)?;
    write_urban_summary(&outputs.summary, dir.join("urban_summary.csv"))?;
    write_timeline(&outputs.timelines, dir.join("timeline.csv"))?;
    for &year in binary_years {
        let (_, g) = grids
            .iter()
            .find(|(y, _)| *y == year)
            .ok_or_else(|| anyhow!("no composite for urban year {year}"))?;
        let b = urban_binary(g, mask, threshold, year)?;
        write_text(&dir.join(format!("binary_{year}.asc")), &render_ascii_grid(&b))?;
    }
    Ok(())
}

pub struct PlotRequest<'a> {
    pub name: &'a str,
    pub y_label: &'a str,
    pub model: Option<ModelKind>,
    pub x_offset: i32,
    pub x_scale: f64,
}

/// One SVG per region: the whole series as markers and the chosen fit.
pub fn plot_series(
    table: &SeriesTable,
    fits: &[FitRow],
    names: &BTreeMap<u32, String>,
    req: &PlotRequest<'_>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let chosen = pick_fits(fits, req.model);
    table
        .iter()
        .map(|(id, points)| {
            let pts: Vec<(f64, f64)> = points.iter().map(|&(y, v)| (y as f64, v)).collect();
            let curve = chosen.get(id).map(|fit| crate::plot::Curve { fit, x_offset: req.x_offset, x_scale: req.x_scale });
            let region = names.get(id).cloned().unwrap_or_else(|| format!("region {id}"));
            let title = match curve {
                Some(c) => format!("{region}: {} ({}, R2 {})", req.y_label, c.fit.kind, nightlights::numfmt::sig(c.fit.r2, 4)),
                None => format!("{region}: {}", req.y_label),
            };
            let labels = crate::plot::Labels { title, x: "year".into(), y: req.y_label.into() };
            let path = dir.join(format!("{}_region_{id:02}.svg", req.name));
            crate::plot::emit_plot(&pts, curve, &labels, &path)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn years_from_file_names() {
        assert_eq!(year_from_name(Path::new("out/composite_2004.asc")), Some(2004));
        assert_eq!(year_from_name(Path::new("F101994.asc")), None);
        assert_eq!(year_from_name(Path::new("F10_1994.asc")), Some(1994));
        assert_eq!(year_from_name(Path::new("grid.asc")), None);
    }
}
