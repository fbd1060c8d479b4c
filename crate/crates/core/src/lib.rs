//! Nighttime-lights raster analytics.
//!
//! The crate is organised as the processing chain runs:
//!
//! * [`raster`]: grids, label masks, ASCII grid I/O, equal-area projection
//! * [`preprocess`]: inter-sensor calibration, duplicate averaging,
//!   inter-annual continuity and saturation clipping
//! * [`zonal`]: per-region statistics and the per-region / per-year tables
//! * [`regress`]: model fitting, goodness of fit, AGDP and growth summaries
//! * [`urban`]: threshold extraction, connected clusters and cluster tracking

pub mod error;
pub mod numfmt;
pub mod preprocess;
pub mod raster;
pub mod regress;
pub mod urban;
pub mod zonal;

mod lstsq;

pub use error::{Error, Result};
