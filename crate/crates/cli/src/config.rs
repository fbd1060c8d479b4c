//! Flat `key = value` pipeline configuration. Relative paths resolve
//! against the config file's directory; `#` starts a comment.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use nightlights::preprocess::Satellite;
use nightlights::regress::ModelKind;
use nightlights::urban::Connectivity;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    /// Coefficient table; the shipped default is used when absent.
    pub calibration: Option<PathBuf>,
    /// Pseudo-invariant site mask for fitting `calibration_edges`.
    pub calibration_site: Option<PathBuf>,
    pub calibration_edges: Vec<(Satellite, Satellite)>,
    pub reference: Satellite,
    pub mask: PathBuf,
    pub legend: Option<PathBuf>,
    /// First year entering the regressions.
    pub start_year: i32,
    pub x_offset: i32,
    pub urban_threshold: f64,
    pub saturation_ceiling: f64,
    pub connectivity: Connectivity,
    pub models: Vec<ModelKind>,
    pub urban_years: Vec<i32>,
    pub lit_only: bool,
    pub gdp: Option<PathBuf>,
    pub provinces: Option<PathBuf>,
    pub agdp_x_offset: i32,
    pub agdp_x_scale: f64,
    pub fourier_grid: usize,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn read(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::parse(&text, base).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str, base: &Path) -> Result<PipelineConfig> {
        let mut seen = BTreeSet::new();
        let mut manifest = None;
        let mut mask = None;
        let mut cfg = PipelineConfig {
            manifest: PathBuf::new(),
            calibration: None,
            calibration_site: None,
            calibration_edges: Vec::new(),
            reference: Satellite::F10,
            mask: PathBuf::new(),
            legend: None,
            start_year: 1994,
            x_offset: 1993,
            urban_threshold: 55.0,
            saturation_ceiling: 63.0,
            connectivity: Connectivity::Eight,
            models: vec![ModelKind::Linear, ModelKind::Quadratic],
            urban_years: Vec::new(),
            lit_only: false,
            gdp: None,
            provinces: None,
            agdp_x_offset: 1989,
            agdp_x_scale: 100.0,
            fourier_grid: 200,
            out_dir: base.join("out"),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line}: expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                bail!("line {line}: duplicate key `{key}`");
            }
            let path = || base.join(value);
            let err = |e: anyhow::Error| e.context(format!("line {line}: bad value for `{key}`"));
            match key {
                "manifest" => manifest = Some(path()),
                "calibration" => cfg.calibration = Some(path()),
                "calibration_site" => cfg.calibration_site = Some(path()),
                "calibration_edges" => cfg.calibration_edges = list(value, parse_edge).map_err(err)?,
                "reference" => cfg.reference = parse(value).map_err(err)?,
                "mask" => mask = Some(path()),
                "legend" => cfg.legend = Some(path()),
                "start_year" => cfg.start_year = parse(value).map_err(err)?,
                "x_offset" => cfg.x_offset = parse(value).map_err(err)?,
                "urban_threshold" => cfg.urban_threshold = parse(value).map_err(err)?,
                "saturation_ceiling" => cfg.saturation_ceiling = parse(value).map_err(err)?,
                "connectivity" => cfg.connectivity = parse(value).map_err(err)?,
                "models" => cfg.models = list(value, parse).map_err(err)?,
                "urban_years" => cfg.urban_years = list(value, parse).map_err(err)?,
                "lit_only" => cfg.lit_only = parse(value).map_err(err)?,
                "gdp" => cfg.gdp = Some(path()),
                "provinces" => cfg.provinces = Some(path()),
                "agdp_x_offset" => cfg.agdp_x_offset = parse(value).map_err(err)?,
                "agdp_x_scale" => cfg.agdp_x_scale = parse(value).map_err(err)?,
                "fourier_grid" => cfg.fourier_grid = parse(value).map_err(err)?,
                "out_dir" => cfg.out_dir = path(),
                _ => bail!("line {line}: unknown key `{key}`"),
            }
        }
        cfg.manifest = manifest.ok_or_else(|| anyhow!("missing required key `manifest`"))?;
        cfg.mask = mask.ok_or_else(|| anyhow!("missing required key `mask`"))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if !self.calibration_edges.is_empty() && self.calibration_site.is_none() {
            bail!("`calibration_edges` needs `calibration_site`");
        }
        if self.gdp.is_some() != self.provinces.is_some() {
            bail!("`gdp` and `provinces` must be given together");
        }
        if !self.models.contains(&ModelKind::Linear) {
            bail!("`models` must include linear (growth slopes come from it)");
        }
        if !(self.urban_threshold > 0.0 && self.urban_threshold <= 63.0) {
            bail!("`urban_threshold` must be in (0, 63]");
        }
        if !(self.saturation_ceiling > 0.0) {
            bail!("`saturation_ceiling` must be positive");
        }
        if !(self.agdp_x_scale > 0.0) {
            bail!("`agdp_x_scale` must be positive");
        }
        if self.fourier_grid < 2 {
            bail!("`fourier_grid` must be at least 2");
        }
        Ok(())
    }

    /// Every input path named by the config, for an existence check.
    pub fn input_paths(&self) -> Vec<&Path> {
        let mut v = vec![self.manifest.as_path(), self.mask.as_path()];
        for p in [&self.calibration, &self.calibration_site, &self.legend, &self.gdp, &self.provinces]
            .into_iter()
            .flatten()
        {
            v.push(p);
        }
        v
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow!("{value:?}: {e}"))
}

fn list<T>(value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect()
}

/// `SOURCE:TARGET`, e.g. `F12:F10`.
pub fn parse_edge(s: &str) -> Result<(Satellite, Satellite)> {
    let (a, b) = s.split_once(':').ok_or_else(|| anyhow!("edge {s:?} is not SOURCE:TARGET"))?;
    Ok((parse(a.trim())?, parse(b.trim())?))
}
