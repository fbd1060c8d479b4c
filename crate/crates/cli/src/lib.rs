//! Command-line front end of the nightlights toolkit: one subcommand per
//! stage, a config-driven `pipeline`, and a synthetic scenario generator.

pub mod config;
pub mod pipeline;
pub mod plot;
pub mod stages;
pub mod synth;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use nightlights::preprocess::{
    build_annual_composites, default_calibration, read_calibration_csv, write_calibration_csv, CalibrationGraph,
    Satellite, SATURATION_CEILING,
};
use nightlights::raster::{read_ascii_grid, read_label_mask, resample_nearest, write_ascii_grid, Crs, Header};
use nightlights::regress::{
    read_fits_csv, read_gdp_csv, read_province_map, read_series_csv, write_agdp_csv, write_fits_csv,
    write_growth_csv, write_series_csv, ModelKind,
};
use nightlights::urban::{Connectivity, DEFAULT_THRESHOLD};
use nightlights::zonal::ZonalOptions;

use crate::stages::{FitSettings, PlotRequest};

#[derive(Debug, Parser)]
#[command(name = "nightlights", version, about = "Night-time light analysis of urban growth")]
pub struct Cli {
    /// Directory for outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit intercalibration coefficients over a pseudo-invariant site.
    CalibrateFit(CalibrateFitArgs),
    /// Build the annual composites from a product manifest.
    Preprocess(PreprocessArgs),
    /// Zonal statistics of composites under a region mask.
    Zonal(ZonalArgs),
    /// Allocate provincial GDP to regions per lit pixel.
    Agdp(AgdpArgs),
    /// Fit regression models to yearly series.
    Fit(FitArgs),
    /// Threshold urban areas and track their clusters over years.
    Urban(UrbanArgs),
    /// Plot series with fits, and rank regional growth.
    Report(ReportArgs),
    /// Run every stage from a config file.
    Pipeline(PipelineArgs),
    /// Write a synthetic scenario with planted truth.
    Synth(SynthArgs),
    /// Reproject a geographic grid onto an equal-area target header.
    Resample(ResampleArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateFitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Mask whose nonzero cells are the pseudo-invariant site.
    #[arg(long)]
    pub site: PathBuf,
    /// Edges as SOURCE:TARGET, e.g. F12:F10.
    #[arg(long, value_delimiter = ',', required = true, value_parser = config::parse_edge)]
    pub edges: Vec<(Satellite, Satellite)>,
    /// Output file name inside the out dir.
    #[arg(long, default_value = "calibration_fitted.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Coefficient table; the shipped default when absent.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long, default_value = "F10")]
    pub reference: Satellite,
    #[arg(long, default_value_t = SATURATION_CEILING)]
    pub ceiling: f64,
}

#[derive(Debug, Args)]
pub struct ZonalArgs {
    /// Grid files, or directories of composite_YYYY.asc files.
    #[arg(long, required = true, num_args = 1..)]
    pub grid: Vec<PathBuf>,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub legend: Option<PathBuf>,
    /// Year of a single grid whose name carries none.
    #[arg(long)]
    pub year: Option<i32>,
    /// Only count lit pixels (DN > 0).
    #[arg(long)]
    pub lit_only: bool,
    #[arg(long, default_value = "zonal.csv")]
    pub out: PathBuf,
    /// Also write per-region and per-year tables to out-dir/tables.
    #[arg(long)]
    pub tables: bool,
    /// Also write LaRDI, STD and TNL series to out-dir/series.
    #[arg(long)]
    pub series: bool,
}

#[derive(Debug, Args)]
pub struct AgdpArgs {
    #[arg(long)]
    pub gdp: PathBuf,
    #[arg(long)]
    pub provinces: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub legend: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Series CSV (region_id,year,value).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "linear")]
    pub model: Vec<ModelKind>,
    #[arg(long, default_value_t = 1993)]
    pub x_offset: i32,
    #[arg(long, default_value_t = 1.0)]
    pub x_scale: f64,
    #[arg(long)]
    pub start_year: Option<i32>,
    #[arg(long)]
    pub end_year: Option<i32>,
    #[arg(long, default_value_t = 200)]
    pub fourier_grid: usize,
    #[arg(long, default_value = "fits.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct UrbanArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub grid: Vec<PathBuf>,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub legend: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value = "8")]
    pub connectivity: Connectivity,
    /// Years whose binary rasters are written.
    #[arg(long, value_delimiter = ',')]
    pub binary_years: Vec<i32>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Series CSV to plot.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Fits CSV whose curves are drawn.
    #[arg(long)]
    pub fits: Option<PathBuf>,
    /// Model drawn when the fits hold several.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Plot file prefix and axis label.
    #[arg(long, default_value = "series")]
    pub name: String,
    #[arg(long)]
    pub legend: Option<PathBuf>,
    #[arg(long, default_value_t = 1993)]
    pub x_offset: i32,
    #[arg(long, default_value_t = 1.0)]
    pub x_scale: f64,
    /// Linear LaRDI fits for the growth ranking.
    #[arg(long, requires_all = ["std_fits", "first_year", "last_year"])]
    pub slope_fits: Option<PathBuf>,
    /// STD fits for the growth ranking.
    #[arg(long)]
    pub std_fits: Option<PathBuf>,
    #[arg(long)]
    pub first_year: Option<i32>,
    #[arg(long)]
    pub last_year: Option<i32>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub size: usize,
    #[arg(long, default_value_t = 8)]
    pub regions: usize,
    #[arg(long, default_value_t = 2)]
    pub merge_region: u32,
    #[arg(long, default_value_t = 12)]
    pub merge_step: i32,
}

#[derive(Debug, Args)]
pub struct ResampleArgs {
    /// Geographic (lon/lat) input grid.
    #[arg(long)]
    pub input: PathBuf,
    /// Grid whose header defines the target.
    #[arg(long)]
    pub like: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub lon0: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub lat0: f64,
    #[arg(long, default_value = "resampled.asc")]
    pub out: PathBuf,
}

/// Log level and thread pool from the global flags. `RUST_LOG` is ignored.
pub fn init(cli: &Cli) -> Result<()> {
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::CalibrateFit(a) => {
            let products = stages::load_manifest(&a.manifest)?;
            let site = read_label_mask(&a.site, None)?;
            let models = stages::fit_edges(&products, &site, &a.edges)?;
            stages::create_dir(out)?;
            write_calibration_csv(&models, out.join(&a.out))?;
        }
        Command::Preprocess(a) => {
            let products = stages::load_manifest(&a.manifest)?;
            let models = match &a.calibration {
                Some(p) => read_calibration_csv(p)?,
                None => default_calibration(),
            };
            let composites = build_annual_composites(&products, &CalibrationGraph::new(models, a.reference), a.ceiling)?;
            stages::write_composites(&composites, &out.join("composites"))?;
            info!("wrote {} composites", composites.len());
        }
        Command::Zonal(a) => {
            let grids = stages::read_year_grids(&a.grid, a.year)?;
            let mask = read_label_mask(&a.mask, a.legend.as_deref())?;
            let records = stages::zonal_all(&grids, &mask, ZonalOptions { lit_only: a.lit_only })?;
            let years: Vec<i32> = grids.iter().map(|g| g.0).collect();
            stages::write_zonal_outputs(
                &records,
                &mask,
                &years,
                &out.join(&a.out),
                a.tables.then(|| out.join("tables")).as_deref(),
                a.series.then(|| out.join("series")).as_deref(),
            )?;
        }
        Command::Agdp(a) => {
            let mask = read_label_mask(&a.mask, a.legend.as_deref())?;
            let records = stages::agdp(&read_gdp_csv(&a.gdp)?, &read_province_map(&a.provinces)?, &mask)?;
            stages::create_dir(&out.join("series"))?;
            write_agdp_csv(&records, out.join("agdp.csv"))?;
            write_series_csv(&stages::agdp_series(&records), out.join("series").join("agdp.csv"))?;
        }
        Command::Fit(a) => {
            if a.model.is_empty() {
                bail!("no models given");
            }
            let settings = FitSettings {
                x_offset: a.x_offset,
                x_scale: a.x_scale,
                start_year: a.start_year,
                end_year: a.end_year,
                fourier_grid: a.fourier_grid,
            };
            let rows = stages::fit_table(&read_series_csv(&a.input)?, &a.model, &settings)?;
            create_parent(&out.join(&a.out))?;
            write_fits_csv(&rows, out.join(&a.out))?;
        }
        Command::Urban(a) => {
            let grids = stages::read_year_grids(&a.grid, None)?;
            let mask = read_label_mask(&a.mask, a.legend.as_deref())?;
            let outputs = stages::urban_all(&grids, &mask, a.threshold, a.connectivity)?;
            stages::write_urban_outputs(&outputs, &grids, &mask, a.threshold, &a.binary_years, &out.join("urban"))?;
        }
        Command::Report(a) => report(a, out)?,
        Command::Pipeline(a) => {
            pipeline::run_pipeline_file(&a.config)?;
        }
        Command::Synth(a) => {
            let scenario = synth::Scenario {
                seed: a.seed,
                size: a.size,
                regions: a.regions,
                merge_region: a.merge_region,
                merge_step: a.merge_step,
            };
            stages::create_dir(out)?;
            synth::generate_synthetic(&scenario, out)?;
            info!("synthetic scenario in {}", out.display());
        }
        Command::Resample(a) => {
            let src = read_ascii_grid(&a.input)?.with_crs(Crs::LonLat);
            let like: Header = *read_ascii_grid(&a.like)?.header();
            let r = resample_nearest(&src, &like, Crs::LambertEqualArea { lon0: a.lon0, lat0: a.lat0 })?;
            create_parent(&out.join(&a.out))?;
            write_ascii_grid(&r.grid, out.join(&a.out))?;
        }
    }
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => stages::create_dir(p),
        _ => Ok(()),
    }
}

fn report(a: &ReportArgs, out: &Path) -> Result<()> {
    if a.series.is_none() && a.slope_fits.is_none() {
        bail!("nothing to report: pass --series or --slope-fits");
    }
    if let Some(series) = &a.series {
        let table = read_series_csv(series)?;
        let fits = match &a.fits {
            Some(p) => read_fits_csv(p)?,
            None => Vec::new(),
        };
        let names = match &a.legend {
            Some(p) => nightlights::raster::read_legend(p)?,
            None => Default::default(),
        };
        let req = PlotRequest { name: &a.name, y_label: &a.name, model: a.model, x_offset: a.x_offset, x_scale: a.x_scale };
        let written = stages::plot_series(&table, &fits, &names, &req, &out.join("plots"))?;
        info!("wrote {} plots", written.len());
    }
    if let (Some(slope), Some(std), Some(first), Some(last)) = (&a.slope_fits, &a.std_fits, a.first_year, a.last_year) {
        let rows = stages::growth(&read_fits_csv(slope)?, &read_fits_csv(std)?, a.x_offset, first, last)?;
        stages::create_dir(out)?;
        write_growth_csv(&rows, out.join("growth.csv"))?;
    }
    Ok(())
}
