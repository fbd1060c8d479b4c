//! The full run driven by a [`PipelineConfig`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use serde::Serialize;

use nightlights::preprocess::{
    build_annual_composites, default_calibration, read_calibration_csv, write_calibration_csv, CalibrationGraph,
};
use nightlights::raster::{read_label_mask, Grid};
use nightlights::regress::{
    read_gdp_csv, read_province_map, write_agdp_csv, write_fits_csv, write_growth_csv, write_series_csv, ModelKind,
};
use nightlights::zonal::ZonalOptions;

use crate::config::PipelineConfig;
use crate::stages::{self, FitSettings, PlotRequest};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationSummary {
    pub source: String,
    pub target: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeSummary {
    pub region_id: u32,
    pub year_from: i32,
    pub year_to: i32,
    pub sources: Vec<u32>,
    pub target: u32,
}

/// Written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub years: Vec<i32>,
    pub regions: BTreeMap<u32, String>,
    pub calibration_fitted: bool,
    pub calibration: Vec<CalibrationSummary>,
    pub lardi_slopes: BTreeMap<u32, f64>,
    pub merges: Vec<MergeSummary>,
    pub outputs: Vec<String>,
}

pub fn run_pipeline_file(path: &Path) -> Result<PipelineSummary> {
    run_pipeline(&PipelineConfig::read(path)?)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    for p in cfg.input_paths() {
        if !p.exists() {
            bail!("input {} does not exist", p.display());
        }
    }
    let out = cfg.out_dir.as_path();
    stages::create_dir(out)?;

    let products = stages::load_manifest(&cfg.manifest)?;
    if let (Some(first), Some(last)) = (products.keys().next(), products.keys().next_back()) {
        if !(*first..=*last).contains(&cfg.start_year) {
            bail!("start_year {} is outside the manifest years {first}-{last}", cfg.start_year);
        }
    }
    let fitted = !cfg.calibration_edges.is_empty();
    let models = if fitted {
        let site_path = cfg
            .calibration_site
            .as_ref()
            .context("`calibration_edges` needs `calibration_site`")?;
        let site = read_label_mask(site_path, None)?;
        let models = stages::fit_edges(&products, &site, &cfg.calibration_edges)?;
        write_calibration_csv(&models, out.join("calibration_fitted.csv"))?;
        models
    } else if let Some(p) = &cfg.calibration {
        read_calibration_csv(p)?
    } else {
        default_calibration()
    };
    let calibration = models
        .iter()
        .map(|m| CalibrationSummary {
            source: m.source.to_string(),
            target: m.target.to_string(),
            a: m.a,
            b: m.b,
            c: m.c,
            r2: m.r2,
        })
        .collect();
    let graph = CalibrationGraph::new(models, cfg.reference);

    info!("building composites for {} years", products.len());
    let composites = build_annual_composites(&products, &graph, cfg.saturation_ceiling)?;
    stages::write_composites(&composites, &out.join("composites"))?;
    // Later stages read the values as written to disk.
    let grids: Vec<(i32, Grid)> = composites.iter().map(|c| (c.year, c.grid.quantized())).collect();
    drop(composites);
    let years: Vec<i32> = grids.iter().map(|g| g.0).collect();

    let mask = read_label_mask(&cfg.mask, cfg.legend.as_deref())?;
    let records = stages::zonal_all(&grids, &mask, ZonalOptions { lit_only: cfg.lit_only })?;
    stages::write_zonal_outputs(
        &records,
        &mask,
        &years,
        &out.join("zonal.csv"),
        Some(&out.join("tables")),
        Some(&out.join("series")),
    )?;

    let settings = FitSettings {
        x_offset: cfg.x_offset,
        x_scale: 1.0,
        start_year: Some(cfg.start_year),
        end_year: None,
        fourier_grid: cfg.fourier_grid,
    };
    let lardi = stages::series_of(&records, |r| r.mean);
    let std = stages::series_of(&records, |r| r.std);
    let lardi_fits = stages::fit_table(&lardi, &cfg.models, &settings)?;
    let std_fits = stages::fit_table(&std, &[ModelKind::Fourier1], &settings)?;
    let fits_dir = out.join("fits");
    stages::create_dir(&fits_dir)?;
    write_fits_csv(&lardi_fits, fits_dir.join("lardi.csv"))?;
    write_fits_csv(&std_fits, fits_dir.join("std.csv"))?;

    let first = cfg.start_year.max(years[0]);
    let last = *years.last().expect("composites are never empty");
    let growth = stages::growth(&lardi_fits, &std_fits, cfg.x_offset, first, last)?;
    write_growth_csv(&growth, out.join("growth.csv"))?;

    let names = mask.legend().clone();
    let plots = out.join("plots");
    stages::plot_series(&lardi, &lardi_fits, &names, &plot("lardi", "LaRDI", ModelKind::Linear, cfg.x_offset, 1.0), &plots)?;
    stages::plot_series(&std, &std_fits, &names, &plot("std", "STD", ModelKind::Fourier1, cfg.x_offset, 1.0), &plots)?;

    if let (Some(gdp), Some(provinces)) = (&cfg.gdp, &cfg.provinces) {
        let agdp = stages::agdp(&read_gdp_csv(gdp)?, &read_province_map(provinces)?, &mask)?;
        write_agdp_csv(&agdp, out.join("agdp.csv"))?;
        let series = stages::agdp_series(&agdp);
        write_series_csv(&series, out.join("series").join("agdp.csv"))?;
        let agdp_settings = FitSettings {
            x_offset: cfg.agdp_x_offset,
            x_scale: cfg.agdp_x_scale,
            start_year: None,
            end_year: None,
            fourier_grid: cfg.fourier_grid,
        };
        let agdp_fits = stages::fit_table(&series, &cfg.models, &agdp_settings)?;
        write_fits_csv(&agdp_fits, fits_dir.join("agdp.csv"))?;
        let model = if cfg.models.contains(&ModelKind::Power) { ModelKind::Power } else { ModelKind::Linear };
        let req = plot("agdp", "AGDP", model, cfg.agdp_x_offset, cfg.agdp_x_scale);
        stages::plot_series(&series, &agdp_fits, &names, &req, &plots)?;
    }

    let urban = stages::urban_all(&grids, &mask, cfg.urban_threshold, cfg.connectivity)?;
    stages::write_urban_outputs(&urban, &grids, &mask, cfg.urban_threshold, &cfg.urban_years, &out.join("urban"))?;
    let merges = urban
        .timelines
        .iter()
        .flat_map(|(id, t)| {
            t.merges().map(move |e| MergeSummary {
                region_id: id.unwrap_or(0),
                year_from: e.year_from,
                year_to: e.year_to,
                sources: e.sources.clone(),
                target: e.target,
            })
        })
        .collect();

    let summary = PipelineSummary {
        years,
        regions: names,
        calibration_fitted: fitted,
        calibration,
        lardi_slopes: stages::pick_fits(&lardi_fits, Some(ModelKind::Linear))
            .into_iter()
            .map(|(id, f)| (id, f.params[0]))
            .collect(),
        merges,
        outputs: list_outputs(out)?.into_iter().filter(|f| f != "summary.json").collect(),
    };
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    fs::write(out.join("summary.json"), json).context("writing summary.json")?;
    info!("pipeline outputs in {}", out.display());
    Ok(summary)
}

fn plot<'a>(name: &'a str, y_label: &'a str, model: ModelKind, x_offset: i32, x_scale: f64) -> PlotRequest<'a> {
    PlotRequest { name, y_label, model: Some(model), x_offset, x_scale }
}

/// Relative paths of every file under `dir`, sorted.
pub fn list_outputs(dir: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut stack: Vec<PathBuf> = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(rel) = path.strip_prefix(dir) {
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out.sort();
    Ok(out)
}
