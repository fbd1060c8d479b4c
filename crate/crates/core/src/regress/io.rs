//! CSV schemas of the regression layer. Fit parameters and AGDP values are
//! written at full round-trip precision; series values at six significant
//! digits like the zonal tables they come from.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{AgdpRecord, GdpRow, GrowthRow, ModelKind, RegressionFit};
use crate::error::{csv_error, Error, Result};
use crate::numfmt::sig6;

/// Yearly values per region.
pub type SeriesTable = BTreeMap<u32, Vec<(i32, f64)>>;

const SERIES_HEADER: [&str; 3] = ["region_id", "year", "value"];
const GDP_HEADER: [&str; 3] = ["province", "year", "gdp"];
const PROVINCE_HEADER: [&str; 2] = ["province", "region_id"];
const AGDP_HEADER: [&str; 5] = ["region_id", "year", "agdp", "gdp_total", "pixel_total"];
const FITS_HEADER: [&str; 11] = ["region_id", "model", "p1", "p2", "p3", "p4", "sse", "r2", "f", "n", "k"];
const GROWTH_HEADER: [&str; 5] = ["region_id", "slope", "slope_rank", "std_mean_growth", "std_rank"];

/// One fit per region, as in a fit report.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub region_id: u32,
    pub fit: RegressionFit,
}

struct Table<'a> {
    path: &'a Path,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table<'_> {
    fn read<'a>(path: &'a Path, header: &[&str]) -> Result<Table<'a>> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let got = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        if got.iter().collect::<Vec<_>>() != header {
            return Err(Error::parse(path, 1, format!("expected header {}", header.join(","))));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Table { path, rows })
    }

    fn field<T: FromStr>(&self, line: usize, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
        rec[i]
            .parse()
            .map_err(|_| Error::parse(self.path, line, format!("bad {name} {:?}", &rec[i])))
    }
}

fn render(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_series_csv(path: impl AsRef<Path>) -> Result<SeriesTable> {
    let t = Table::read(path.as_ref(), &SERIES_HEADER)?;
    let mut out = SeriesTable::new();
    for (line, rec) in &t.rows {
        let id: u32 = t.field(*line, rec, 0, "region_id")?;
        let year: i32 = t.field(*line, rec, 1, "year")?;
        let value: f64 = t.field(*line, rec, 2, "value")?;
        out.entry(id).or_default().push((year, value));
    }
    for pts in out.values_mut() {
        pts.sort_by_key(|p| p.0);
    }
    Ok(out)
}

pub fn render_series_csv(table: &SeriesTable) -> String {
    render(
        &SERIES_HEADER,
        table
            .iter()
            .flat_map(|(id, pts)| pts.iter().map(move |(y, v)| vec![id.to_string(), y.to_string(), sig6(*v)])),
    )
}

pub fn write_series_csv(table: &SeriesTable, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &render_series_csv(table))
}

pub fn read_gdp_csv(path: impl AsRef<Path>) -> Result<Vec<GdpRow>> {
    let t = Table::read(path.as_ref(), &GDP_HEADER)?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            Ok(GdpRow {
                province: rec[0].to_string(),
                year: t.field(*line, rec, 1, "year")?,
                gdp: t.field(*line, rec, 2, "gdp")?,
            })
        })
        .collect()
}

pub fn read_province_map(path: impl AsRef<Path>) -> Result<BTreeMap<String, u32>> {
    let t = Table::read(path.as_ref(), &PROVINCE_HEADER)?;
    let mut out = BTreeMap::new();
    for (line, rec) in &t.rows {
        let id: u32 = t.field(*line, rec, 1, "region_id")?;
        if out.insert(rec[0].to_string(), id).is_some() {
            return Err(Error::parse(t.path, *line, format!("province {:?} listed twice", &rec[0])));
        }
    }
    Ok(out)
}

pub fn write_agdp_csv(records: &[AgdpRecord], path: impl AsRef<Path>) -> Result<()> {
    let text = render(
        &AGDP_HEADER,
        records.iter().map(|r| {
            vec![
                r.region_id.to_string(),
                r.year.to_string(),
                r.agdp.to_string(),
                r.gdp_total.to_string(),
                r.pixel_total.to_string(),
            ]
        }),
    );
    write_text(path.as_ref(), &text)
}

pub fn read_agdp_csv(path: impl AsRef<Path>) -> Result<Vec<AgdpRecord>> {
    let t = Table::read(path.as_ref(), &AGDP_HEADER)?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            Ok(AgdpRecord {
                region_id: t.field(*line, rec, 0, "region_id")?,
                year: t.field(*line, rec, 1, "year")?,
                agdp: t.field(*line, rec, 2, "agdp")?,
                gdp_total: t.field(*line, rec, 3, "gdp_total")?,
                pixel_total: t.field(*line, rec, 4, "pixel_total")?,
            })
        })
        .collect()
}

pub fn render_fits_csv(rows: &[FitRow]) -> String {
    render(
        &FITS_HEADER,
        rows.iter().map(|r| {
            let f = &r.fit;
            let mut v = vec![r.region_id.to_string(), f.kind.to_string()];
            v.extend((0..4).map(|i| f.params.get(i).map_or(String::new(), f64::to_string)));
            v.extend([f.sse.to_string(), f.r2.to_string(), f.f_stat.to_string(), f.n.to_string(), f.k_regressors.to_string()]);
            v
        }),
    )
}

pub fn write_fits_csv(rows: &[FitRow], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &render_fits_csv(rows))
}

pub fn read_fits_csv(path: impl AsRef<Path>) -> Result<Vec<FitRow>> {
    let t = Table::read(path.as_ref(), &FITS_HEADER)?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            let kind: ModelKind = rec[1].parse().map_err(|e: Error| Error::parse(t.path, *line, e.to_string()))?;
            let count = kind.param_names().len();
            let params = (0..count)
                .map(|i| t.field(*line, rec, 2 + i, FITS_HEADER[2 + i]))
                .collect::<Result<Vec<f64>>>()?;
            Ok(FitRow {
                region_id: t.field(*line, rec, 0, "region_id")?,
                fit: RegressionFit {
                    kind,
                    params,
                    sse: t.field(*line, rec, 6, "sse")?,
                    r2: t.field(*line, rec, 7, "r2")?,
                    f_stat: t.field(*line, rec, 8, "f")?,
                    n: t.field(*line, rec, 9, "n")?,
                    k_regressors: t.field(*line, rec, 10, "k")?,
                    warnings: Vec::new(),
                },
            })
        })
        .collect()
}

pub fn render_growth_csv(rows: &[GrowthRow]) -> String {
    render(
        &GROWTH_HEADER,
        rows.iter().map(|r| {
            vec![
                r.region_id.to_string(),
                r.slope.to_string(),
                r.slope_rank.to_string(),
                r.std_mean_growth.to_string(),
                r.std_rank.to_string(),
            ]
        }),
    )
}

pub fn write_growth_csv(rows: &[GrowthRow], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &render_growth_csv(rows))
}
