use std::collections::BTreeMap;
use std::path::Path;

use super::{read_ascii_grid, Grid, Header, Window};
use crate::error::{csv_error, Error, Result};

/// Region label raster. Label 0 is outside every region.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    header: Header,
    labels: Vec<u32>,
    legend: BTreeMap<u32, String>,
}

impl LabelMask {
    pub fn new(header: Header, labels: Vec<u32>, legend: BTreeMap<u32, String>) -> Result<Self> {
        if labels.len() != header.len() {
            return Err(Error::InvalidGrid(format!(
                "label count mismatch: expected {}, found {}",
                header.len(),
                labels.len()
            )));
        }
        if let Some(&missing) = labels.iter().find(|&&l| l != 0 && !legend.contains_key(&l)) {
            return Err(Error::Invalid(format!("label {missing} has no legend entry")));
        }
        Ok(LabelMask {
            header,
            labels,
            legend,
        })
    }

    /// Interprets an integer-valued grid as labels; nodata cells become 0.
    /// Without a legend every label is named `region_<id>`.
    pub fn from_grid(grid: &Grid, legend: Option<BTreeMap<u32, String>>) -> Result<Self> {
        let mut labels = Vec::with_capacity(grid.values().len());
        for (i, &v) in grid.values().iter().enumerate() {
            if grid.is_nodata(v) {
                labels.push(0);
            } else if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 {
                labels.push(v as u32);
            } else {
                return Err(Error::InvalidGrid(format!("cell {i} holds non-integer label {v}")));
            }
        }
        let legend = legend.unwrap_or_else(|| {
            labels
                .iter()
                .filter(|&&l| l != 0)
                .map(|&l| (l, format!("region_{l}")))
                .collect()
        });
        LabelMask::new(*grid.header(), labels, legend)
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn legend(&self) -> &BTreeMap<u32, String> {
        &self.legend
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.legend.get(&id).map(String::as_str)
    }

    /// Region IDs in ascending order, as listed in the legend.
    pub fn region_ids(&self) -> Vec<u32> {
        self.legend.keys().copied().collect()
    }

    /// Number of cells carrying `id`.
    pub fn pixel_count(&self, id: u32) -> usize {
        self.labels.iter().filter(|&&l| l == id).count()
    }

    /// Bounding window of the cells labelled `id` together with a mask over
    /// that window where only `id` is kept.
    pub fn crop_to_region(&self, id: u32) -> Result<Option<(Window, LabelMask)>> {
        let nc = self.header.ncols;
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for (i, _) in self.labels.iter().enumerate().filter(|(_, &l)| l == id) {
            let (r, c) = (i / nc, i % nc);
            bounds = Some(match bounds {
                None => (r, r, c, c),
                Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
            });
        }
        let Some((r0, r1, c0, c1)) = bounds else {
            return Ok(None);
        };
        let w = Window {
            row0: r0,
            col0: c0,
            nrows: r1 - r0 + 1,
            ncols: c1 - c0 + 1,
        };
        let header = self.header.window(&w)?;
        let mut labels = Vec::with_capacity(header.len());
        for r in r0..=r1 {
            labels.extend(self.labels[r * nc + c0..=r * nc + c1].iter().map(|&l| if l == id { id } else { 0 }));
        }
        let legend = self.legend.get(&id).map(|n| (id, n.clone())).into_iter().collect();
        Ok(Some((w, LabelMask::new(header, labels, legend)?)))
    }

    pub fn ensure_applies_to(&self, grid: &Header) -> Result<()> {
        self.header.ensure_aligned(grid)
    }
}

/// Legend CSV with header `region_id,region_name`.
pub fn read_legend(path: impl AsRef<Path>) -> Result<BTreeMap<u32, String>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["region_id", "region_name"] {
        return Err(Error::parse(path, 1, "expected header region_id,region_name"));
    }
    let mut legend = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let id: u32 = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad region_id {:?}", &record[0])))?;
        if id == 0 {
            return Err(Error::parse(path, line, "region_id 0 is reserved for outside"));
        }
        legend.insert(id, record[1].trim().to_string());
    }
    Ok(legend)
}

pub fn read_label_mask(path: impl AsRef<Path>, legend: Option<&Path>) -> Result<LabelMask> {
    let grid = read_ascii_grid(path)?;
    let legend = legend.map(read_legend).transpose()?;
    LabelMask::from_grid(&grid, legend)
}
