//! Grid representation, ASCII grid I/O, equal-area projection and
//! nearest-neighbour resampling.
//!
//! A [`Grid`] is immutable once built: every operation in the crate returns a
//! new grid rather than editing one in place.

mod ascii;
mod mask;
mod projection;
mod resample;

pub use ascii::{parse_ascii_grid, read_ascii_grid, render_ascii_grid, write_ascii_grid};
pub use mask::{read_label_mask, read_legend, LabelMask};
pub use projection::{
    project_lambert_equal_area, unproject_lambert_equal_area, LambertAzimuthal, AUTHALIC_RADIUS,
};
pub use resample::{resample_nearest, Resampled};

use crate::error::{Error, Result};
use crate::numfmt;

/// Georeferencing shared by a grid and every mask applied to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub ncols: usize,
    pub nrows: usize,
    /// Lower-left corner.
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
}

impl Header {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, nodata: f64) -> Self {
        Header {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
        }
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same lattice: dimensions, origin and cell size all equal. The nodata
    /// sentinel is not part of alignment.
    pub fn aligned_with(&self, other: &Header) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.xll == other.xll
            && self.yll == other.yll
            && self.cellsize == other.cellsize
    }

    pub fn ensure_aligned(&self, other: &Header) -> Result<()> {
        if self.aligned_with(other) {
            Ok(())
        } else {
            Err(Error::HeaderMismatch(format!(
                "{}x{} @ ({}, {}) cell {} vs {}x{} @ ({}, {}) cell {}",
                self.ncols,
                self.nrows,
                self.xll,
                self.yll,
                self.cellsize,
                other.ncols,
                other.nrows,
                other.xll,
                other.yll,
                other.cellsize
            )))
        }
    }

    /// Map coordinates of the centre of cell (`row`, `col`); row 0 is the top row.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.xll + (col as f64 + 0.5) * self.cellsize;
        let y = self.yll + ((self.nrows - row) as f64 - 0.5) * self.cellsize;
        (x, y)
    }

    /// Cell containing map coordinate (`x`, `y`), if inside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = ((x - self.xll) / self.cellsize).floor();
        let from_bottom = ((y - self.yll) / self.cellsize).floor();
        if !col.is_finite() || !from_bottom.is_finite() {
            return None;
        }
        if col < 0.0 || from_bottom < 0.0 {
            return None;
        }
        let (col, from_bottom) = (col as usize, from_bottom as usize);
        if col >= self.ncols || from_bottom >= self.nrows {
            return None;
        }
        Some((self.nrows - 1 - from_bottom, col))
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || (v.is_nan() && self.nodata.is_nan())
    }
}

/// Coordinate reference tag. ASCII grids carry none, so grids read from disk
/// start untagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crs {
    LonLat,
    LambertEqualArea { lon0: f64, lat0: f64 },
}

/// A rectangular block of cells, in row/column units from the top left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub row0: usize,
    pub col0: usize,
    pub nrows: usize,
    pub ncols: usize,
}

impl Header {
    /// Header of the sub-grid covered by `w`.
    pub fn window(&self, w: &Window) -> Result<Header> {
        if w.nrows == 0 || w.ncols == 0 || w.row0 + w.nrows > self.nrows || w.col0 + w.ncols > self.ncols {
            return Err(Error::InvalidGrid(format!(
                "window {w:?} outside a {}x{} grid",
                self.nrows, self.ncols
            )));
        }
        Ok(Header {
            ncols: w.ncols,
            nrows: w.nrows,
            xll: self.xll + w.col0 as f64 * self.cellsize,
            yll: self.yll + (self.nrows - w.row0 - w.nrows) as f64 * self.cellsize,
            ..*self
        })
    }
}

/// A georeferenced raster of DN values, row-major with the top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    header: Header,
    values: Vec<f64>,
    crs: Option<Crs>,
}

impl Grid {
    /// Builds a grid, enforcing that the value count matches the header and
    /// every valid cell is finite and non-negative.
    pub fn new(header: Header, values: Vec<f64>) -> Result<Self> {
        if header.ncols == 0 || header.nrows == 0 {
            return Err(Error::InvalidGrid("ncols and nrows must be positive".into()));
        }
        if !(header.cellsize > 0.0 && header.cellsize.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "cellsize must be positive, got {}",
                header.cellsize
            )));
        }
        if values.len() != header.len() {
            return Err(Error::InvalidGrid(format!(
                "value count mismatch: expected {}, found {}",
                header.len(),
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !header.is_nodata(v) && !(v.is_finite() && v >= 0.0))
        {
            return Err(Error::InvalidGrid(format!(
                "cell {} (row {}, col {}) holds {v}; DN must be finite and >= 0",
                i,
                i / header.ncols,
                i % header.ncols
            )));
        }
        Ok(Grid {
            header,
            values,
            crs: None,
        })
    }

    pub fn filled(header: Header, value: f64) -> Result<Self> {
        Grid::new(header, vec![value; header.len()])
    }

    pub fn with_crs(mut self, crs: Crs) -> Self {
        self.crs = Some(crs);
        self
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn crs(&self) -> Option<Crs> {
        self.crs
    }

    pub fn ncols(&self) -> usize {
        self.header.ncols
    }

    pub fn nrows(&self) -> usize {
        self.header.nrows
    }

    pub fn nodata(&self) -> f64 {
        self.header.nodata
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.header.ncols + col]
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        self.header.is_nodata(v)
    }

    /// Valid (non-nodata) value at flat index `i`.
    pub fn valid(&self, i: usize) -> Option<f64> {
        let v = self.values[i];
        (!self.is_nodata(v)).then_some(v)
    }

    /// Applies `f` to every valid cell, leaving nodata untouched.
    pub fn map_valid(&self, f: impl Fn(f64) -> f64) -> Result<Grid> {
        let values = self
            .values
            .iter()
            .map(|&v| if self.is_nodata(v) { v } else { f(v) })
            .collect();
        let mut out = Grid::new(self.header, values)?;
        out.crs = self.crs;
        Ok(out)
    }

    /// The grid as a reader would see it after a write at printed precision.
    pub fn quantized(&self) -> Grid {
        let values = self
            .values
            .iter()
            .map(|&v| if self.is_nodata(v) { v } else { numfmt::printed(v) })
            .collect();
        Grid {
            header: self.header,
            values,
            crs: self.crs,
        }
    }

    /// The cells inside `w`, georeferenced to the window.
    pub fn crop(&self, w: &Window) -> Result<Grid> {
        let header = self.header.window(w)?;
        let mut values = Vec::with_capacity(header.len());
        for r in w.row0..w.row0 + w.nrows {
            let start = r * self.header.ncols + w.col0;
            values.extend_from_slice(&self.values[start..start + w.ncols]);
        }
        Ok(Grid {
            header,
            values,
            crs: self.crs,
        })
    }

    /// Largest valid value, if any.
    pub fn max_valid(&self) -> Option<f64> {
        (0..self.values.len())
            .filter_map(|i| self.valid(i))
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}
