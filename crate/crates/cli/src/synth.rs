//! Deterministic synthetic scenario: sensor products with planted
//! calibration distortions, linear regional growth, and a scripted merge of
//! two urban clusters. Generating parameters go to `truth.json`.

use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nightlights::preprocess::{
    closest_year_pair, CalibrationGraph, CalibrationModel, Satellite, FIRST_YEAR, LAST_YEAR,
};
use nightlights::raster::{render_ascii_grid, Grid, Header};

const NODATA: f64 = -9999.0;
const CELLSIZE: f64 = 1000.0;
const SITE_SIZE: usize = 8;
const INNER_SLOPE: f64 = 0.5;
const OUTER_SLOPE: f64 = 4.0;
const INNER_RADIUS: usize = 16;
const MERGE_HALF_GAP: usize = 2;
const MERGE_RATE: f64 = 0.5;
const THRESHOLD: f64 = 55.0;
const PROVINCES: usize = 31;
/// Keeps cone footprints clear of block edges and of the site corner.
const MARGIN: usize = 9;

/// Default planted distortions. Coefficients are short decimals so that the
/// site DN they produce is exact at six significant digits.
pub const PLANTED_EDGES: [(Satellite, Satellite, f64, f64, f64); 5] = [
    (Satellite::F12, Satellite::F10, 0.0003, 1.01, -0.2),
    (Satellite::F14, Satellite::F12, 0.0005, 0.99, -0.15),
    (Satellite::F15, Satellite::F14, 0.0002, 1.02, -0.3),
    (Satellite::F16, Satellite::F15, 0.0004, 1.0, -0.25),
    (Satellite::F18, Satellite::F16, 0.0006, 0.98, -0.1),
];

#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    /// Side of the square grid in cells.
    pub size: usize,
    /// Regions laid out as two rows of blocks.
    pub regions: usize,
    pub merge_region: u32,
    /// Years after the first year at which the two planted clusters join.
    pub merge_step: i32,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario { seed: 1, size: 500, regions: 8, merge_region: 2, merge_step: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCalibration {
    pub source: String,
    pub target: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub source_year: i32,
    pub target_year: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRegion {
    pub region_id: u32,
    pub name: String,
    pub pixels: u64,
    /// Mean per-pixel DN growth per year.
    pub slope: f64,
    /// Pixels at or above the threshold, one entry per year.
    pub urban_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedMerge {
    pub region_id: u32,
    pub year_from: i32,
    pub year_to: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub size: usize,
    pub threshold: f64,
    pub years: Vec<i32>,
    pub calibration: Vec<PlantedCalibration>,
    pub regions: Vec<PlantedRegion>,
    pub merges: Vec<PlantedMerge>,
}

impl Truth {
    pub fn read(path: impl AsRef<Path>) -> Result<Truth> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

struct Cone {
    row: usize,
    col: usize,
    peak: f64,
    radius: usize,
}

impl Cone {
    fn new(row: usize, col: usize, peak: f64) -> Cone {
        let radius = INNER_RADIUS + ((peak - INNER_SLOPE * INNER_RADIUS as f64 - 0.125) / OUTER_SLOPE).floor() as usize;
        Cone { row, col, peak, radius }
    }

    fn value_at(&self, row: usize, col: usize) -> Option<f64> {
        let d = row.abs_diff(self.row).max(col.abs_diff(self.col));
        if d > self.radius {
            return None;
        }
        let inner = INNER_SLOPE * d.min(INNER_RADIUS) as f64;
        let outer = OUTER_SLOPE * d.saturating_sub(INNER_RADIUS) as f64;
        Some(self.peak - inner - outer)
    }
}

fn quadratic_inverse(m: &CalibrationModel, y: f64) -> f64 {
    if m.a == 0.0 {
        return (y - m.c) / m.b;
    }
    (-m.b + (m.b * m.b - 4.0 * m.a * (m.c - y)).sqrt()) / (2.0 * m.a)
}

/// Writes the scenario into `out_dir` and returns its ground truth.
pub fn generate_synthetic(scenario: &Scenario, out_dir: &Path) -> Result<Truth> {
    let Scenario { seed, size, regions, merge_region, merge_step } = *scenario;
    ensure!(regions >= 2 && regions % 2 == 0 && regions <= 16, "regions must be even and in 2..=16, got {regions}");
    ensure!((1..=regions as u32).contains(&merge_region), "merge region {merge_region} outside 1..={regions}");
    let span = LAST_YEAR - FIRST_YEAR;
    ensure!((2..=span).contains(&merge_step), "merge step must be in 2..={span}, got {merge_step}");
    let (bh, bw) = (size / 2, size / (regions / 2));
    let widest = 2 * (Cone::new(0, 0, 63.0).radius + MERGE_HALF_GAP) + 1;
    ensure!(
        bh.min(bw) >= widest + 2 * MARGIN,
        "grid of {size} cells is too small for {regions} regions (blocks need {} cells per side)",
        widest + 2 * MARGIN
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size * size;
    let header = Header::new(size, size, -(size as f64) * CELLSIZE / 2.0, -(size as f64) * CELLSIZE / 2.0, CELLSIZE, NODATA);
    let block_of = |r: usize, c: usize| -> u32 {
        let br = (r / bh).min(1);
        let bc = (c / bw).min(regions / 2 - 1);
        (br * (regions / 2) + bc) as u32 + 1
    };
    let in_site = |r: usize, c: usize| r < SITE_SIZE && c < SITE_SIZE;

    // Per-region growth rate and cones.
    let mut rates = Vec::with_capacity(regions);
    let mut cones: Vec<Vec<Cone>> = Vec::with_capacity(regions);
    for id in 1..=regions as u32 {
        let idx = id as usize - 1;
        let (r0, c0) = ((idx / (regions / 2)) * bh, (idx % (regions / 2)) * bw);
        let (h, w) = (if idx / (regions / 2) == 1 { size - bh } else { bh }, if idx % (regions / 2) == regions / 2 - 1 { size - c0 } else { bw });
        let slack_r = (h - widest) / 2 - MARGIN;
        let slack_c = (w - widest) / 2 - MARGIN;
        let cr = r0 + h / 2 + rng.gen_range(0..=2 * slack_r) - slack_r;
        let cc = c0 + w / 2 + rng.gen_range(0..=2 * slack_c) - slack_c;
        if id == merge_region {
            // The saddle between the peaks reaches the threshold exactly
            // `merge_step` years in, one year after each peak has.
            let peak = THRESHOLD + 0.125 + INNER_SLOPE - MERGE_RATE * (merge_step - 1) as f64;
            rates.push(MERGE_RATE);
            cones.push(vec![Cone::new(cr, cc - MERGE_HALF_GAP, peak), Cone::new(cr, cc + MERGE_HALF_GAP, peak)]);
        } else {
            let g = 0.25 * rng.gen_range(1..=4) as f64;
            let peak = 63.0 - span as f64 * g - 0.125 - 0.25 * rng.gen_range(0..=12) as f64;
            rates.push(g);
            cones.push(vec![Cone::new(cr, cc, peak)]);
        }
    }

    // Truth: D = base + rate · (year - FIRST_YEAR), on a 1/8-offset
    // quarter lattice so no cell ever sits within 0.125 of the threshold.
    let mut base = vec![0.0; n];
    let mut rate = vec![0.0; n];
    let mut label = vec![0u32; n];
    for r in 0..size {
        for c in 0..size {
            let i = r * size + c;
            let k = rng.gen_range(0..=31usize);
            let jitter = 0.25 * rng.gen_range(-1..=1) as f64;
            if in_site(r, c) {
                continue;
            }
            let id = block_of(r, c);
            label[i] = id;
            let g = rates[id as usize - 1];
            let cone = cones[id as usize - 1].iter().filter_map(|k| k.value_at(r, c)).reduce(f64::max);
            match cone {
                Some(v) => {
                    base[i] = v;
                    rate[i] = g;
                }
                None => {
                    base[i] = 0.125 + 0.25 * k as f64;
                    rate[i] = g + jitter;
                }
            }
        }
    }
    let site_pattern: Vec<f64> = (0..SITE_SIZE * SITE_SIZE).map(|_| rng.gen_range(5..=60) as f64).collect();

    let planted: Vec<CalibrationModel> = PLANTED_EDGES
        .iter()
        .map(|&(s, t, a, b, c)| CalibrationModel::new(s, t, a, b, c, 0.0, 1.0))
        .collect::<nightlights::Result<_>>()?;
    let graph = CalibrationGraph::new(planted.clone(), Satellite::F10);
    let chains = graph.resolve_all(&Satellite::ALL)?;
    let pairs: Vec<(i32, i32)> = planted
        .iter()
        .map(|m| {
            let ys: Vec<i32> = m.source.years().collect();
            let yt: Vec<i32> = m.target.years().collect();
            closest_year_pair(&ys, &yt).context("planted edge without overlapping years")
        })
        .collect::<Result<_>>()?;

    fs::create_dir_all(out_dir.join("products")).with_context(|| format!("creating {}", out_dir.display()))?;
    let years: Vec<i32> = (FIRST_YEAR..=LAST_YEAR).collect();
    let products: Vec<(Satellite, i32)> = years
        .iter()
        .flat_map(|&y| Satellite::available_in(y).into_iter().map(move |s| (s, y)))
        .collect();

    products.par_iter().try_for_each(|&(sat, year)| -> Result<()> {
        let chain = &chains[&sat];
        let t = (year - FIRST_YEAR) as f64;
        let raw_of = |d: f64| chain.steps.iter().rev().fold(d, |v, m| quadratic_inverse(m, v));
        let mut values = vec![0.0; n];
        for (i, v) in values.iter_mut().enumerate() {
            let (r, c) = (i / size, i % size);
            *v = if in_site(r, c) {
                let x = site_pattern[r * SITE_SIZE + c];
                match planted.iter().zip(&pairs).find(|(m, p)| m.target == sat && p.1 == year) {
                    Some((m, _)) => m.eval(x),
                    None => x,
                }
            } else {
                raw_of(base[i] + rate[i] * t)
            };
        }
        let grid = Grid::new(header, values)?;
        let path = out_dir.join("products").join(format!("{sat}{year}.asc"));
        fs::write(&path, render_ascii_grid(&grid)).with_context(|| format!("writing {}", path.display()))
    })?;

    let mut manifest = String::from("year,satellite,path\n");
    for (sat, year) in &products {
        manifest.push_str(&format!("{year},{sat},products/{sat}{year}.asc\n"));
    }
    write(out_dir, "manifest.csv", &manifest)?;

    let labels = Grid::new(header, label.iter().map(|&l| l as f64).collect())?;
    write(out_dir, "regions.asc", &render_ascii_grid(&labels))?;
    let site = Grid::new(header, (0..n).map(|i| if in_site(i / size, i % size) { 1.0 } else { 0.0 }).collect())?;
    write(out_dir, "site.asc", &render_ascii_grid(&site))?;

    let names: Vec<String> = (1..=regions).map(|i| format!("Region {i}")).collect();
    let mut legend = String::from("region_id,region_name\n");
    for (i, name) in names.iter().enumerate() {
        legend.push_str(&format!("{},{name}\n", i + 1));
    }
    write(out_dir, "legend.csv", &legend)?;

    let mut provinces = String::from("province,region_id\n");
    let mut gdp = String::from("province,year,gdp\n");
    let scale: Vec<(f64, f64)> = (0..PROVINCES).map(|_| (rng.gen_range(1.0e4..1.0e5), rng.gen_range(1.5..2.5))).collect();
    for p in 0..PROVINCES {
        provinces.push_str(&format!("P{:02},{}\n", p + 1, p % regions + 1));
    }
    for &year in &years {
        let x = (year - 1989) as f64 / 100.0;
        for (p, &(c, beta)) in scale.iter().enumerate() {
            gdp.push_str(&format!("P{:02},{year},{:.2}\n", p + 1, c * x.powf(beta)));
        }
    }
    write(out_dir, "provinces.csv", &provinces)?;
    write(out_dir, "gdp.csv", &gdp)?;

    let edges: Vec<String> = planted.iter().map(|m| format!("{}:{}", m.source, m.target)).collect();
    let conf = format!(
        "# Synthetic scenario, seed {seed}\n\
         manifest = manifest.csv\n\
         calibration_site = site.asc\n\
         calibration_edges = {}\n\
         reference = F10\n\
         mask = regions.asc\n\
         legend = legend.csv\n\
         start_year = 1994\n\
         x_offset = 1993\n\
         urban_threshold = 55\n\
         saturation_ceiling = 63\n\
         connectivity = 8\n\
         models = linear, quadratic, exponential, power, fourier1\n\
         urban_years = {}, {}, {}, {}\n\
         gdp = gdp.csv\n\
         provinces = provinces.csv\n\
         out_dir = out\n",
        edges.join(", "),
        FIRST_YEAR,
        FIRST_YEAR + merge_step - 1,
        FIRST_YEAR + merge_step,
        LAST_YEAR,
    );
    write(out_dir, "pipeline.conf", &conf)?;

    let mut region_truth = Vec::with_capacity(regions);
    for id in 1..=regions as u32 {
        let cells: Vec<usize> = (0..n).filter(|&i| label[i] == id).collect();
        let slope = cells.iter().map(|&i| rate[i]).sum::<f64>() / cells.len() as f64;
        let urban_counts = years
            .iter()
            .map(|&y| {
                let t = (y - FIRST_YEAR) as f64;
                cells.iter().filter(|&&i| base[i] + rate[i] * t >= THRESHOLD).count() as u64
            })
            .collect();
        region_truth.push(PlantedRegion {
            region_id: id,
            name: names[id as usize - 1].clone(),
            pixels: cells.len() as u64,
            slope,
            urban_counts,
        });
    }

    let truth = Truth {
        seed,
        size,
        threshold: THRESHOLD,
        years: years.clone(),
        calibration: planted
            .iter()
            .zip(&pairs)
            .map(|(m, p)| PlantedCalibration {
                source: m.source.to_string(),
                target: m.target.to_string(),
                a: m.a,
                b: m.b,
                c: m.c,
                source_year: p.0,
                target_year: p.1,
            })
            .collect(),
        regions: region_truth,
        merges: vec![PlantedMerge {
            region_id: merge_region,
            year_from: FIRST_YEAR + merge_step - 1,
            year_to: FIRST_YEAR + merge_step,
        }],
    };
    write(out_dir, "truth.json", &(serde_json::to_string_pretty(&truth)? + "\n"))?;
    Ok(truth)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
