//! Turns a raw satellite-year manifest into one corrected composite per year:
//! calibrate every product onto a reference sensor, average duplicate years,
//! enforce non-decreasing DN across years and clip saturation.

mod calibration;
mod composite;
mod manifest;

use std::fmt;
use std::str::FromStr;

pub use calibration::{
    apply_calibration, default_calibration, fit_intercalibration, pseudo_invariant_samples,
    read_calibration_csv, render_calibration_csv, resolve_calibration_chain, select_calibration_years,
    closest_year_pair,
    write_calibration_csv, CalibrationChain, CalibrationGraph, CalibrationModel,
};
pub use composite::{
    average_duplicates, build_annual_composites, clip_saturation, enforce_continuity, mean_of,
    AnnualComposite, Provenance, SATURATION_CEILING,
};
pub use manifest::{load_products, read_manifest, ManifestEntry};

use crate::error::{Error, Result};
use crate::raster::Grid;

pub const FIRST_YEAR: i32 = 1992;
pub const LAST_YEAR: i32 = 2013;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Satellite {
    F10,
    F12,
    F14,
    F15,
    F16,
    F18,
}

impl Satellite {
    pub const ALL: [Satellite; 6] = [
        Satellite::F10,
        Satellite::F12,
        Satellite::F14,
        Satellite::F15,
        Satellite::F16,
        Satellite::F18,
    ];

    /// Years with a stable-lights composite from this sensor.
    pub fn years(self) -> std::ops::RangeInclusive<i32> {
        match self {
            Satellite::F10 => 1992..=1994,
            Satellite::F12 => 1994..=1999,
            Satellite::F14 => 1997..=2003,
            Satellite::F15 => 2000..=2007,
            Satellite::F16 => 2004..=2009,
            Satellite::F18 => 2010..=2013,
        }
    }

    pub fn available(self, year: i32) -> bool {
        self.years().contains(&year)
    }

    /// Sensors with a product in `year`, oldest first.
    pub fn available_in(year: i32) -> Vec<Satellite> {
        Satellite::ALL.into_iter().filter(|s| s.available(year)).collect()
    }
}

impl fmt::Display for Satellite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Satellite::F10 => "F10",
            Satellite::F12 => "F12",
            Satellite::F14 => "F14",
            Satellite::F15 => "F15",
            Satellite::F16 => "F16",
            Satellite::F18 => "F18",
        };
        f.write_str(s)
    }
}

impl FromStr for Satellite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Satellite::ALL
            .into_iter()
            .find(|sat| sat.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Invalid(format!("unknown satellite {s:?}")))
    }
}

/// One sensor's annual composite, still on that sensor's DN scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorProduct {
    satellite: Satellite,
    year: i32,
    grid: Grid,
}

impl SensorProduct {
    pub fn new(satellite: Satellite, year: i32, grid: Grid) -> Result<Self> {
        if !(FIRST_YEAR..=LAST_YEAR).contains(&year) {
            return Err(Error::Invalid(format!("year {year} outside {FIRST_YEAR}..={LAST_YEAR}")));
        }
        if !satellite.available(year) {
            return Err(Error::Invalid(format!("{satellite} has no product for {year}")));
        }
        if let Some(max) = grid.max_valid() {
            if max > SATURATION_CEILING {
                return Err(Error::InvalidGrid(format!(
                    "{satellite}{year}: raw DN {max} exceeds {SATURATION_CEILING}"
                )));
            }
        }
        Ok(SensorProduct {
            satellite,
            year,
            grid,
        })
    }

    pub fn satellite(&self) -> Satellite {
        self.satellite
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Product identifier in the archive's naming, e.g. `F101994`.
    pub fn id(&self) -> String {
        format!("{}{}", self.satellite, self.year)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Header;

    #[test]
    fn availability_matches_archive_pattern() {
        assert_eq!(Satellite::available_in(1994), vec![Satellite::F10, Satellite::F12]);
        assert_eq!(Satellite::available_in(2008), vec![Satellite::F16]);
        assert_eq!(Satellite::available_in(2010), vec![Satellite::F18]);
        let total: usize = (FIRST_YEAR..=LAST_YEAR).map(|y| Satellite::available_in(y).len()).sum();
        assert_eq!(total, 34);
        assert!((FIRST_YEAR..=LAST_YEAR).all(|y| !Satellite::available_in(y).is_empty()));
    }

    #[test]
    fn product_rejects_unavailable_pair() {
        let g = Grid::filled(Header::new(1, 1, 0.0, 0.0, 1.0, -1.0), 5.0).unwrap();
        assert!(SensorProduct::new(Satellite::F18, 2005, g.clone()).is_err());
        let p = SensorProduct::new(Satellite::F10, 1994, g).unwrap();
        assert_eq!(p.id(), "F101994");
    }

    #[test]
    fn satellite_parses_case_insensitively() {
        assert_eq!("f16".parse::<Satellite>().unwrap(), Satellite::F16);
        assert!("F11".parse::<Satellite>().is_err());
    }
}
